"""Protocol library and deterministic simulation harness for a two-phase
sharded ledger with stake-weighted sortition, a relay-selection game, and a
peer-to-peer data-retrieval game."""

__version__ = "0.1.0"
