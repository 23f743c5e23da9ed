import numpy as np
import pytest

from ksadapt.types import CineSeries, CoilSensitivities, MultiCoilKSpace, SamplingMask


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_problem(seed, nx=8, ny=8, nt=3, nc=2, lines=None):
    rng = np.random.default_rng(seed)
    x = CineSeries(crandn(rng, nx, ny, nt))
    s = CoilSensitivities(crandn(rng, nx, ny, nc))
    y = MultiCoilKSpace(crandn(rng, nx, ny, nt, nc))
    if lines is None:
        lines = sorted(rng.choice(ny, size=max(1, ny // 2), replace=False).tolist())
    return x, s, y, SamplingMask(ny, lines)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_slice():
    from ksadapt.phantom import PhantomSpec, simulate_slice

    return simulate_slice(PhantomSpec(nx=16, ny=16, nt=4, nc=2))


def dense_operator(s, m, nt):
    """Explicit matrix of the encoding operator, built column by column."""
    from ksadapt.operators import EncodingOperator

    op = EncodingOperator(s.data, m.as_array())
    nx, ny = s.shape[:2]
    n = nx * ny * nt
    cols = []
    for j in range(n):
        e = np.zeros(n, complex)
        e[j] = 1
        cols.append(op.forward(e.reshape(nx, ny, nt)).ravel())
    return np.stack(cols, axis=1)


def dense_dc_solve(A, y, z, lam):
    """Limit point of CG started at z on (A^H A + lam I) x = A^H y + lam z.

    For lam > 0 this is the unique solution; for lam = 0 on a singular system
    it is the minimum-norm solution plus the null-space part of z.
    """
    N = A.conj().T @ A + lam * np.eye(A.shape[1])
    b = A.conj().T @ y.ravel() + lam * z.ravel()
    if lam > 0:
        return np.linalg.solve(N, b)
    Np = np.linalg.pinv(N, rcond=1e-10, hermitian=True)
    return Np @ b + (z.ravel() - Np @ (N @ z.ravel()))


def greedy_best_swap(y, x, m, recon, sens=None, loss_name="nmse"):
    """Brute-force local search: apply the best single (sampled, free) swap until none improves."""
    from ksadapt.masks import evaluate_mask

    cur = evaluate_mask(m, y, x, recon, loss_name, sens)
    while True:
        best_loss, best_mask = cur, None
        for a in m.movable:
            for b in m.free:
                c = m.relocate([a], [b])
                loss = evaluate_mask(c, y, x, recon, loss_name, sens)
                if loss < best_loss:
                    best_loss, best_mask = loss, c
        if best_mask is None:
            return m, cur
        m, cur = best_mask, best_loss


def swap_neighbors(m):
    for a in m.movable:
        for b in m.free:
            yield m.relocate([a], [b])


def tiny_slice(seed, nx=8, ny=8, nt=2, nc=2):
    from ksadapt.phantom import PhantomSpec, random_slice_spec, simulate_slice

    return simulate_slice(random_slice_spec(PhantomSpec(nx=nx, ny=ny, nt=nt, nc=nc), seed=seed))


# acceptance bookkeeping: one summary line per criterion
ACCEPTANCE = []


class criterion:
    """Context manager that records PASS/FAIL and wall time for one criterion."""

    def __init__(self, number, title, limit_s=None):
        self.number, self.title, self.limit_s = number, title, limit_s
        self.detail = ""

    def __enter__(self):
        import time

        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        import time

        elapsed = time.perf_counter() - self.t0
        ok = exc_type is None and (self.limit_s is None or elapsed < self.limit_s)
        note = f"{elapsed:.1f}s" + (f" (limit {self.limit_s:g}s)" if self.limit_s else "")
        if exc_type is not None:
            note += f": {exc_type.__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {self.number}: {self.title} ({note})"
        if self.detail:
            line += f" [{self.detail}]"
        ACCEPTANCE.append(line)
        print(line)
        if exc_type is None and not ok:
            raise AssertionError(f"criterion {self.number} exceeded its runtime limit: {note}")
        return False


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
