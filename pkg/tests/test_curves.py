import json

import numpy as np
import pytest

from harmonic_patchwork import GridWindow, Window, classify_grid, counterexample_labeling, make_family
from harmonic_patchwork.curves import (
    LevelCurve,
    TraceSettings,
    _march,
    boundary_graph,
    escape_monotonicity_check,
    project_to_level,
    trace_level_curve,
)
from harmonic_patchwork.errors import NoEscapeError, PreconditionError, SingularPointError
from harmonic_patchwork.piecewise import cusp_family, diagonal_family, half_plane_labeling

H = 2 / 256


@pytest.fixture(scope="module")
def grid():
    return GridWindow.over(Window.square(), 256)


def settings_for(f):
    return TraceSettings.default(f, H)


def check_curve(f, c, settings):
    i, j = c.pair
    v = c.vertices
    gap = f.harmonic_values(v)[i - 1] - f.harmonic_values(v)[j - 1] - c.level
    assert np.abs(gap).max() <= settings.curve_tol
    ds = np.diff(c.arclength)
    assert np.all(ds > 0)
    assert ds.min() >= settings.step / 2 and ds.max() <= 2 * settings.step
    np.testing.assert_array_equal(c.densities, np.abs(f.A(i, v) - f.A(j, v)) / 2)
    # segment directions against the analytic tangent
    mid = (v[1:] + v[:-1]) / 2
    t = 1j * np.conj(f.A(i, mid) - f.A(j, mid))
    seg = np.diff(v)
    ang = np.abs(np.angle(seg / t))
    ang = np.minimum(ang, np.pi - ang)
    assert ang.max() <= 10 * settings.step
    # the chord between neighbours is orthogonal to the gradient up to O(step^2)
    g = np.conj(f.A(i, v) - f.A(j, v))
    tangent = v[2:] - v[:-2]
    g = g[1:-1]
    ortho = np.abs((tangent * np.conj(g)).real) / (np.abs(tangent) * np.abs(g))
    assert ortho.max() <= max(1e-6, 10 * settings.step**2)


def test_trace_anti_diagonal():
    f = diagonal_family()
    s = settings_for(f)
    c = trace_level_curve(f, 1, 2, 0, settings=s)
    assert np.abs(c.vertices.real + c.vertices.imag).max() <= s.curve_tol
    check_curve(f, c, s)
    assert c.length == pytest.approx(2 * np.sqrt(2), abs=2 * s.step)
    assert c.mass() == pytest.approx(np.sqrt(2) / 2 * c.length, rel=1e-12)


def test_trace_vertical_line():
    f = cusp_family()
    s = settings_for(f)
    c = trace_level_curve(f, 1, 3, 0, settings=s)
    assert np.abs(c.vertices.real).max() <= s.curve_tol
    check_curve(f, c, s)


def test_trace_hyperbola_branch():
    f = cusp_family()
    s = settings_for(f)
    seed = project_to_level(f, 1, 2, 0.1 + 0.6j, settings=s)
    c = trace_level_curve(f, 1, 2, seed, settings=s)
    x, y = c.vertices.real, c.vertices.imag
    assert np.abs((x + 2) ** 2 - y**2 - 4).max() <= 10 * s.curve_tol
    check_curve(f, c, s)


def test_trace_is_reversible():
    f = cusp_family()
    s = settings_for(f)
    c = trace_level_curve(f, 1, 2, 0.1 + 0.6j, settings=s)
    back = trace_level_curve(f, 1, 2, c.vertices[-1], settings=s)
    # every vertex of the retrace lies on the original polyline within 10 curve_tol
    for z in back.vertices[:: max(len(back.vertices) // 50, 1)]:
        x, y = z.real, z.imag
        assert abs(4 * x + x * x - y * y) <= 10 * s.curve_tol
    assert abs(back.length - c.length) <= 2 * s.step


def test_trace_errors():
    f = make_family([[0, 1], 0])
    s = TraceSettings.default(f, H)
    with pytest.raises(SingularPointError) as exc:
        trace_level_curve(f, 1, 2, 0, settings=s)
    assert abs(exc.value.location) < 1e-12
    with pytest.raises(PreconditionError):
        trace_level_curve(diagonal_family(), 1, 2, 5.0)


def test_loop_closure():
    # non-harmonic level set |z|^2 = 0.25 exercises the closing logic
    g = lambda z: abs(z) ** 2 - 0.25
    grad = lambda z: 2 * z
    s = TraceSettings(0.01, 1e-12, 1e-9)
    pts, closed = _march(g, grad, 0.5 + 0j, 1.0, s, Window.square(), 10000)
    assert closed
    assert pts[-1] == 0.5
    assert len(pts) == pytest.approx(np.pi / 0.01, abs=2)


def test_graph_example_one_nine(grid):
    f = diagonal_family()
    G = boundary_graph(f, classify_grid(f, grid))
    assert len(G.curves) == 1
    assert G.curves[0].pair == (1, 2)
    assert G.corners == []
    # the trace stops at the last vertex inside the window, one step short at most per end
    step = TraceSettings.default(f, grid.h).step
    assert G.total_mass() == pytest.approx(2.0, abs=np.sqrt(2) * step)


def test_graph_example_seven_one(grid):
    f = cusp_family()
    G = boundary_graph(f, classify_grid(f, grid))
    pairs = sorted(c.pair for c in G.curves)
    assert (1, 2) in pairs and (1, 3) in pairs
    assert min(abs(c) for c in G.corners) <= 2 * grid.h
    # both interfaces pass through the origin, where they are tangent
    for c in G.curves:
        assert np.abs(c.vertices).min() <= 2 * grid.h
    doc = json.loads(G.to_json())
    assert len(doc["curves"]) == len(G.curves)


def test_graph_counterexample_has_extra_interface(grid):
    f = cusp_family()
    G = boundary_graph(f, counterexample_labeling(grid))
    assert (2, 3) in {c.pair for c in G.curves}
    for c in G.curves:
        if c.pair == (2, 3):
            x, y = c.vertices.real, c.vertices.imag
            assert np.all(y > -grid.h)
            assert np.abs(5 * x + x * x - y * y).max() <= 1e-8


def test_graph_single_region(grid):
    lab = half_plane_labeling(grid, 2, 1j, 1, 1)
    G = boundary_graph(diagonal_family(), lab)
    assert G.curves == [] and G.corners == []


def test_curve_export():
    f = diagonal_family()
    c = trace_level_curve(f, 1, 2, 0, step=0.1)
    rows = list(c.rows())
    assert len(rows) == len(c.vertices) and len(rows[0]) == 4
    d = c.to_dict()
    assert d["pair"] == [1, 2] and d["n_vertices"] == len(c.vertices)
    parts = c.restricted(f, c.vertices.real > 0)
    assert len(parts) == 1 and np.all(parts[0].vertices.real > 0)


def test_escape_examples(grid):
    f = diagonal_family()
    lab = classify_grid(f, grid)
    value, tau = escape_monotonicity_check(f, lab, [1, -1], 1, 2)
    assert value == pytest.approx(-1.0, abs=1e-12)
    assert abs(tau.real + tau.imag) < 1e-9
    with pytest.raises(NoEscapeError):
        escape_monotonicity_check(f, lab, [0.9 - 0.8j, 0.8 - 0.7j], 1, 2)
    with pytest.raises(PreconditionError):
        escape_monotonicity_check(f, lab, [-1, 1], 1, 2)


def test_escape_counterexample_regression(grid):
    f = cusp_family()
    value, tau = escape_monotonicity_check(f, counterexample_labeling(grid), [0.05 + 0.7j, 0.15 + 0.7j], 3, 2)
    assert value <= 0
    # escape at 5x + x^2 = 0.49 along y = 0.7, where the derivative is -5 - 2x = -sqrt(26.96)
    assert value == pytest.approx(-np.sqrt(26.96), abs=1e-9)
    assert value == pytest.approx(-5.192301994298869, abs=1e-12)
