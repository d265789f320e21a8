"""Minimal LP-text reader used to hand exported models to scipy's MILP solver."""

import re

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

TERM = re.compile(r"([+-])\s*(?:([0-9.eE+-]+)\s+)?([A-Za-z_][A-Za-z0-9_]*)")


def _parse_terms(text):
    out = {}
    for sign, coef, var in TERM.findall(text):
        c = float(coef) if coef else 1.0
        out[var] = out.get(var, 0.0) + (-c if sign == "-" else c)
    return out


def parse_lp(text):
    """Tiny reader for the LP subset the exporter writes; independent of the exporter."""
    section, rows, cur = None, [], None
    sections = {"Maximize": "obj", "Subject To": "st", "Bounds": "bounds", "Binary": "bin", "End": "end"}
    obj, cons, bounds, binaries = {}, [], {}, []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("\\"):
            continue
        if line in sections:
            section = sections[line]
            continue
        if section in ("obj", "st"):
            if raw.startswith("   ") and cur is not None:
                cur[1] += " " + line
            else:
                name, body = line.split(":", 1)
                cur = [name.strip(), body]
                rows.append((section, cur))
        elif section == "bounds":
            lo, var, hi = re.match(r"(\S+)\s*<=\s*(\S+)\s*<=\s*(\S+)", line).groups()
            bounds[var] = (float(lo), float(hi))
        elif section == "bin":
            binaries += line.split()
    for kind, (name, body) in rows:
        if kind == "obj":
            obj = _parse_terms(body)
            continue
        m = re.match(r"(.*?)(<=|>=|=)\s*(\S+)\s*$", body)
        cons.append((name, _parse_terms(m.group(1)), m.group(2), float(m.group(3))))
    return obj, cons, bounds, binaries


def solve_lp_text(text):
    obj, cons, bounds, binaries = parse_lp(text)
    names = sorted(set(binaries) | set(bounds) | set(obj) | {v for _, c, _, _ in cons for v in c})
    idx = {v: k for k, v in enumerate(names)}
    c = np.zeros(len(names))
    for v, coef in obj.items():
        c[idx[v]] = -coef  # milp minimises
    A = np.zeros((len(cons), len(names)))
    lo, hi = np.full(len(cons), -np.inf), np.full(len(cons), np.inf)
    for r, (_, coeffs, sense, rhs) in enumerate(cons):
        for v, coef in coeffs.items():
            A[r, idx[v]] = coef
        if sense in ("<=", "="):
            hi[r] = rhs
        if sense in (">=", "="):
            lo[r] = rhs
    integrality = np.array([1 if v in binaries else 0 for v in names])
    vlo = np.array([bounds.get(v, (0.0, 1.0))[0] for v in names])
    vhi = np.array([bounds.get(v, (0.0, 1.0))[1] for v in names])
    res = milp(c, constraints=LinearConstraint(A, lo, hi), integrality=integrality, bounds=Bounds(vlo, vhi))
    if res.status != 0:
        return None
    return -res.fun
