"""Pure-Python fixpoint kernel; reference for the compiled ``_cfixpoint`` module."""

INF = 1 << 30


def stratified_depths(n_atoms, init, head, rule_start, body_atom, body_naf, strata_start):
    """Minimal derivation depth of every ground atom (``INF`` when underivable).

    Ground rules are grouped by stratum: rules ``strata_start[s]:strata_start[s+1]``
    form stratum ``s``.  Rule ``r`` derives ``head[r]`` from the literals
    ``body_atom[rule_start[r]:rule_start[r+1]]``.  ``body_naf[j] >= 0`` marks a
    negative literal whose positive partner atom is ``body_naf[j]``; it is also
    satisfied (at depth 0) when that partner is underivable, which is final by
    the time the stratum runs.
    """
    depth = list(init)
    for s in range(len(strata_start) - 1):
        lo, hi = strata_start[s], strata_start[s + 1]
        changed = True
        while changed:
            changed = False
            for r in range(lo, hi):
                cand = 0
                for j in range(rule_start[r], rule_start[r + 1]):
                    d = depth[body_atom[j]]
                    p = body_naf[j]
                    if p >= 0 and depth[p] >= INF:
                        d = 0
                    if d >= INF:
                        cand = INF
                        break
                    if d > cand:
                        cand = d
                if cand < INF:
                    cand += 1
                    h = head[r]
                    if cand < depth[h]:
                        depth[h] = cand
                        changed = True
    return depth
