"""Chip-level simulator for cooperative multihop DS-CDMA networks with
decode-and-forward relays, joint MMSE interference suppression and
group-based power allocation."""

__version__ = "0.1.0"

from .config import NetworkConfig
from .channels import ChannelState, generate_channels
from .modulation import qpsk_modulate, qpsk_slice
from .spreading import build_signature_matrix, effective_signature, generate_codes, load_codes
from .synthesis import StreamSynthesizer, SymbolFrame, stack_received, synthesize_phase
from .mmse import (
    OracleModel,
    alternate_oracle,
    channel_estimate_mmse,
    estimate_group_stats,
    mmse_receive_filter,
    power_allocation_mmse,
)
from .rals import RalsReceiver, RalsState, RlsFilterBank, rake_group_select, rls_gain_and_inverse_update
from .simulation import PacketResult, Scheme, parse_scheme, run_packet
from .harness import ExperimentSpec, ResultRecord, compare_schemes, run_experiment, wilson_interval

__all__ = [
    "NetworkConfig",
    "ChannelState",
    "generate_channels",
    "qpsk_modulate",
    "qpsk_slice",
    "build_signature_matrix",
    "effective_signature",
    "generate_codes",
    "load_codes",
    "StreamSynthesizer",
    "SymbolFrame",
    "stack_received",
    "synthesize_phase",
    "OracleModel",
    "alternate_oracle",
    "channel_estimate_mmse",
    "estimate_group_stats",
    "mmse_receive_filter",
    "power_allocation_mmse",
    "RalsReceiver",
    "RalsState",
    "RlsFilterBank",
    "rake_group_select",
    "rls_gain_and_inverse_update",
    "PacketResult",
    "Scheme",
    "parse_scheme",
    "run_packet",
    "ExperimentSpec",
    "ResultRecord",
    "compare_schemes",
    "run_experiment",
    "wilson_interval",
]
