"""Performance indexes (AC, COD, AIRF), support extraction and network export."""

import json
from dataclasses import dataclass, field

import numpy as np

from . import _accel

DEFAULT_THRESHOLD = 0.05


def support(estimate, rel_threshold=DEFAULT_THRESHOLD):
    """Edges (i, j), read "j -> i", whose sparse block norm exceeds rel_threshold * max norm."""
    if not 0.0 <= rel_threshold < 1.0:
        raise ValueError("rel_threshold must lie in [0, 1)")
    m, T = estimate.layout.m, estimate.layout.T
    norms = np.linalg.norm(np.asarray(estimate.theta_s).reshape(m, m, T), axis=2)
    top = norms.max(initial=0.0)
    if top == 0.0:
        return set()
    keep = (norms > rel_threshold * top) & (norms > 0.0)
    return {(int(i), int(j)) for i, j in zip(*np.nonzero(keep))}


def complexity(support_size, r, m, T):
    """Free parameters of an S+L predictor: S blocks, H(z) and F."""
    return T * support_size + r * m * T + r * m


def ac(runs):
    """Average relative complexity in percent over runs of (support_size, r, m, T)."""
    runs = list(runs)
    if not runs:
        raise ValueError("no runs")
    return 100.0 / len(runs) * sum(complexity(s, r, m, T) / (m * m * T) for s, r, m, T in runs)


def _coeffs(predictor):
    if hasattr(predictor, "G_coeffs"):
        G = predictor.G_coeffs
        return G() if callable(G) else G
    return np.asarray(predictor, dtype=float)


def predict(test, predictor):
    """One-step predictions for t = L..N-1 (L = number of lags of the predictor)."""
    Y = test.values if hasattr(test, "values") else np.asarray(test, dtype=float)
    G = _coeffs(predictor)
    if Y.shape[0] <= G.shape[0]:
        raise ValueError("test set is shorter than the predictor memory")
    return _accel.one_step_predict(G, Y)


def cod(test, predictor):
    """100 (1 - sum ||y - yhat||^2 / sum ||y - ybar||^2) over the usable test range."""
    Y = test.values if hasattr(test, "values") else np.asarray(test, dtype=float)
    G = _coeffs(predictor)
    L = G.shape[0]
    yhat = predict(Y, G)
    target = Y[L:]
    denom = float(np.sum((target - Y.mean(axis=0)) ** 2))
    if denom == 0.0:
        raise ZeroDivisionError("constant test data")
    return 100.0 * (1.0 - float(np.sum((target - yhat) ** 2)) / denom)


def _pad(G, T):
    G = np.asarray(G, dtype=float)
    if G.shape[0] >= T:
        return G[:T]
    out = np.zeros((T,) + G.shape[1:])
    out[: G.shape[0]] = G
    return out


def _aligned(true_coeffs, est_coeffs):
    true_coeffs = [np.asarray(g, dtype=float) for g in true_coeffs]
    est_coeffs = [np.asarray(g, dtype=float) for g in est_coeffs]
    if len(true_coeffs) != len(est_coeffs) or not true_coeffs:
        raise ValueError("need matching, nonempty lists of true and estimated coefficients")
    for a, b in zip(true_coeffs, est_coeffs):
        if a.shape[1:] != b.shape[1:]:
            raise ValueError("dimension mismatch between true and estimated coefficients")
    T = max(g.shape[0] for g in true_coeffs + est_coeffs)
    return np.stack([_pad(g, T) for g in true_coeffs]), np.stack([_pad(g, T) for g in est_coeffs])


def airf(true_coeffs, est_coeffs):
    """Pooled impulse-response fit in percent; Gbar is the mean true predictor over runs.

    Each entry is one run's (T, m, m) coefficient array; shorter arrays are
    zero-padded to the longest lag.
    """
    G, Gh = _aligned(true_coeffs, est_coeffs)
    Gbar = G.mean(axis=0)
    num = float(np.sum((G - Gh) ** 2))
    den = float(np.sum((G - Gbar) ** 2))
    if den == 0.0:
        raise ZeroDivisionError("true coefficients identical across runs")
    return 100.0 * (1.0 - num / den)


def airf_per_run(true_coeffs, est_coeffs):
    """Per-run fits sharing the suite-wide Gbar, for box-plot style summaries."""
    G, Gh = _aligned(true_coeffs, est_coeffs)
    Gbar = G.mean(axis=0)
    num = np.sum((G - Gh) ** 2, axis=(1, 2, 3))
    den = np.sum((G - Gbar) ** 2, axis=(1, 2, 3))
    return 100.0 * (1.0 - num / den)


@dataclass
class NetworkGraph:
    manifest_nodes: list
    latent_nodes: list
    manifest_edges: list
    latent_edges: list = field(default_factory=list)


def network_from(edges, m, r):
    """Two-layer graph: manifest edges j -> i from the support, every latent linked to every manifest."""
    manifest = [f"y{i + 1}" for i in range(m)]
    latent = [f"x{q + 1}" for q in range(r)]
    medges = sorted((manifest[j], manifest[i]) for i, j in edges)
    ledges = [(x, y) for x in latent for y in manifest]
    return NetworkGraph(manifest, latent, medges, ledges)


def export_network(graph):
    """Return (json_dict, dot_text) for a two-layer network."""
    doc = {
        "manifest_nodes": list(graph.manifest_nodes),
        "latent_nodes": list(graph.latent_nodes),
        "edges": [{"source": s, "target": t, "type": "manifest"} for s, t in graph.manifest_edges]
        + [{"source": s, "target": t, "type": "latent", "bidirectional": True} for s, t in graph.latent_edges],
    }
    lines = ["digraph SL {", "  rankdir=TB;"]
    if graph.latent_nodes:
        lines.append("  subgraph latent {")
        lines.append("    rank=same;")
        for x in graph.latent_nodes:
            lines.append(f'    "{x}" [shape=box, style=dashed];')
        lines.append("  }")
    lines.append("  subgraph manifest {")
    lines.append("    rank=same;")
    for y in graph.manifest_nodes:
        lines.append(f'    "{y}" [shape=circle];')
    lines.append("  }")
    for s, t in graph.manifest_edges:
        lines.append(f'  "{s}" -> "{t}";')
    for s, t in graph.latent_edges:
        lines.append(f'  "{s}" -> "{t}" [dir=both, style=dashed];')
    lines.append("}")
    return doc, "\n".join(lines) + "\n"


def network_json(graph):
    return json.dumps(export_network(graph)[0], indent=2)
