"""Probability oracles: the engine's abstraction of the denoising model.

Given the visible prefix (everything up to the end of the active block,
with mask slots) an oracle returns, for every block position, the top-k
candidate tokens with probabilities plus the probability of the currently
committed token.  Three implementations ship here:

- ``TabularOracle`` — bit-exact replay of scripted scenarios (pattern rules).
- ``SignalOracle`` — a synthetic model whose predictions respond to aligned
  and adversarial context, used by the sweep harness.
- ``RemoteOracle`` — HTTP client speaking the scoring wire protocol.
- ``HashedRandomOracle`` — deterministic pseudo-random posteriors for
  randomized robustness runs.
"""

from remask.oracle.base import (
    Oracle,
    OracleError,
    OracleProtocolError,
    OracleTransportError,
    OracleVocabError,
    score_state,
)
from remask.oracle.hashed import HashedRandomOracle
from remask.oracle.remote import RemoteOracle
from remask.oracle.scenario import Rule, ScenarioSpec, TabularOracle, load_scenario, parse_scenario
from remask.oracle.signal import SignalModelParams, SignalOracle, make_signal_oracle

__all__ = [
    "Oracle",
    "OracleError",
    "OracleProtocolError",
    "OracleTransportError",
    "OracleVocabError",
    "score_state",
    "Rule",
    "ScenarioSpec",
    "TabularOracle",
    "load_scenario",
    "parse_scenario",
    "SignalModelParams",
    "SignalOracle",
    "make_signal_oracle",
    "HashedRandomOracle",
    "RemoteOracle",
]
