"""Fixpoint kernel dispatch: the compiled extension when it was built, else pure Python."""

from __future__ import annotations

from array import array

from . import _pyfixpoint

try:
    from . import _cfixpoint
except ImportError:  # extension not built
    _cfixpoint = None

INF = _pyfixpoint.INF
AVAILABLE = ("compiled", "python") if _cfixpoint is not None else ("python",)
_backend = AVAILABLE[0]


def backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in AVAILABLE:
        raise ValueError(f"fixpoint backend {name!r} unavailable (have {AVAILABLE})")
    _backend = name


def _q(values) -> array:
    return values if isinstance(values, array) and values.typecode == "q" else array("q", values)


def stratified_depths(n_atoms, init, head, rule_start, body_atom, body_naf, strata_start,
                      backend_name: str | None = None) -> list[int]:
    name = backend_name or _backend
    if name == "compiled":
        if _cfixpoint is None:
            raise ValueError("compiled fixpoint backend unavailable")
        return _cfixpoint.stratified_depths(n_atoms, _q(init), _q(head), _q(rule_start),
                                            _q(body_atom), _q(body_naf), _q(strata_start))
    return _pyfixpoint.stratified_depths(n_atoms, init, head, rule_start, body_atom, body_naf, strata_start)
