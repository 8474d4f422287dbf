"""Central finite-difference gradient oracle shared by the autodiff and acceptance tests."""
import numpy as np

from augddpg import autodiff as ad

H = 1e-5


def rel_error(a, b):
    """Norm-wise relative error between two gradient arrays."""
    a, b = np.ravel(a), np.ravel(b)
    denom = np.linalg.norm(a) + np.linalg.norm(b)
    return 0.0 if denom == 0 else float(np.linalg.norm(a - b) / denom)


def numeric_grad(f, t, coords=None, h=H):
    """d f / d t.data at ``coords`` (flat indices) by central differences."""
    flat = t.data.reshape(-1)
    coords = range(flat.size) if coords is None else coords
    out = []
    for i in coords:
        old = flat[i]
        flat[i] = old + h
        up = f()
        flat[i] = old - h
        down = f()
        flat[i] = old
        out.append((up - down) / (2 * h))
    return np.array(out)


def check(build, tensors, rng=None, max_coords=None, reference=None):
    """Worst relative error over ``tensors`` for the scalar graph ``build()``.

    ``build`` returns a scalar Tensor; autodiff and finite differences must agree.
    ``reference`` optionally supplies the function that is differenced instead
    (for objectives that hold part of the graph constant by design).
    """
    for t in tensors:
        t.grad = None
    loss = build()
    ad.backward(loss)
    analytic = [np.array(t.grad if t.grad is not None else np.zeros_like(t.data)) for t in tensors]
    for t in tensors:
        t.grad = None
    value = lambda: float((reference or build)().data)  # noqa: E731
    worst = 0.0
    for t, g in zip(tensors, analytic):
        n = t.data.size
        coords = None
        if max_coords is not None and n > max_coords:
            coords = np.sort(rng.choice(n, max_coords, replace=False))
        num = numeric_grad(value, t, coords)
        ana = g.reshape(-1) if coords is None else g.reshape(-1)[coords]
        worst = max(worst, rel_error(ana, num))
    return worst
