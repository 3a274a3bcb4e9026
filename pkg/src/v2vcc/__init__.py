"""Peer-to-peer EV charging coordination over a named-data forwarding plane.

The package splits into:

- :mod:`v2vcc.naming` -- the name grammar and discovery filters;
- :mod:`v2vcc.ndn` -- the forwarding node (PIT, content store, faces);
- :mod:`v2vcc.kernel` -- discrete-event engine, medium and mobility;
- :mod:`v2vcc.protocol` -- the five-phase consumer/supplier machines;
- :mod:`v2vcc.baseline` -- the centralized-IP comparison model;
- :mod:`v2vcc.harness` -- scenario configs, sweeps and CSV output.
"""

from .model import Offer, MeetingProposal, SupplierProfile, TransactionRecord
from .naming import (Name, DiscoveryFilter, ParsedMessage, Phase, MalformedName,
                     encode_name, parse_name, matches_filter, data_name_for)
from .ndn import Interest, Data, NdnNode, make_data, verify_signature
from .kernel import Kernel, ChannelConfig, Medium, MobilityState, position_at
from .protocol import (ConsumerSession, SupplierApp, NegotiationPolicy,
                       select_supplier, feasible_meeting)
from .baseline import CloudConfig, client_completion_time, run_baseline_experiment
from .harness import (ScenarioConfig, ConfigError, ExperimentError,
                      load_scenario, run_experiment, run_single, write_outputs)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
