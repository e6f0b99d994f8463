"""Diagonal percolation three-coloring: rule oracles, genealogy, radii."""

import numpy as np
import pytest

from ffcolor.field import BudgetExceeded, LabelField, PerturbedField, tracked
from ffcolor.lattice import Window
from ffcolor.perc3color import (
    UNKNOWN,
    PercWindow,
    choose_diagonals,
    coding_radii,
    diagonal_rule,
    three2d_window,
    three_color_2d,
)


def parity_grid(window):
    i, j = np.indices(tuple(window.extent))
    return (i + window.origin[0] + j + window.origin[1]) % 2


# -- diagonal rule -----------------------------------------------------------


def test_diagonal_rule_tie_falls_to_falling_diagonal():
    assert diagonal_rule(0.0, 1) == 1
    assert diagonal_rule(0.0, -1) == 1
    assert diagonal_rule(0.25, 1) == 0
    assert diagonal_rule(0.25, -1) == 1
    assert diagonal_rule(-0.25, -1) == 0


def test_scalar_choose_diagonals_matches_window_grid():
    f = LabelField(21)
    perc = PercWindow.build(f, Window((-5, 7), (12, 12)))
    for si, sj in [(-5, 7), (0, 10), (5, 17), (-2, 12)]:
        got = choose_diagonals((si, sj), f)
        assert got == perc.diag[si + 5, sj - 7]


def test_diagonal_rule_from_raw_labels_and_sign_flip_invariance():
    # shadow recomputation from the label grids, with every sign label
    # flipped: the four-coin product is unchanged, so the diagonals are too
    f = LabelField(33)
    win = Window((0, 0), (40, 40))
    axes = win.axes()
    u = f.uniform_grid("three2d:u", axes)
    b = f.coin_grid("three2d:b", axes).astype(np.int64)
    du = (u[:-1, :-1] + u[1:, 1:]) - (u[1:, :-1] + u[:-1, 1:])
    for sign in (1, -1):
        bb = sign * b
        bprime = bb[:-1, :-1] * bb[1:, :-1] * bb[1:, 1:] * bb[:-1, 1:]
        shadow = np.where(du * bprime > 0, 0, 1)
        perc = PercWindow.build(f, win)
        assert np.array_equal(shadow, perc.diag)


def test_diagonal_frequency_is_half():
    f = LabelField(5)
    perc = PercWindow.build(f, Window((0, 0), (318, 318)))
    assert perc.diag.size >= 100_000
    assert abs(perc.diag.mean() - 0.5) < 0.005


def test_adjacent_squares_uncorrelated():
    f = LabelField(6)
    diag = PercWindow.build(f, Window((0, 0), (318, 318))).diag.astype(float)
    for a, b in [(diag[:-1, :], diag[1:, :]), (diag[:, :-1], diag[:, 1:])]:
        corr = np.corrcoef(a.ravel(), b.ravel())[0, 1]
        assert abs(corr) < 0.01


def test_ties_are_counted_not_silent():
    f = LabelField(5)
    perc = PercWindow.build(f, Window((0, 0), (64, 64)))
    assert perc.ties == 0  # a hit has probability ~2^-50 per square


# -- clusters ----------------------------------------------------------------


def test_clusters_never_mix_parity():
    f = LabelField(7)
    win = Window((3, -4), (65, 65))
    perc = PercWindow.build(f, win)
    par = parity_grid(win)
    for cid in range(perc.nclusters):
        assert len(np.unique(par[perc.labels == cid])) == 1


def test_cluster_of_reports_closed_flag():
    f = LabelField(7)
    perc = PercWindow.build(f, Window((0, 0), (33, 33)))
    labels = perc.labels
    rim = np.zeros(labels.shape, dtype=bool)
    rim[[0, -1], :] = True
    rim[:, [0, -1]] = True
    open_ids = set(labels[rim].tolist())
    coords, closed = perc.cluster_of((16, 16))
    assert closed == (labels[16, 16] not in open_ids)
    assert all(labels[i, j] == labels[16, 16] for i, j in coords)
    coords, closed = perc.cluster_of((0, 5))
    assert not closed


def test_mean_cluster_size_bounded_across_seeds():
    means = []
    for seed in range(10):
        perc = PercWindow.build(LabelField(400 + seed), Window((0, 0), (65, 65)))
        sizes = np.bincount(perc.labels.ravel(), minlength=perc.nclusters)
        means.append(sizes.mean())
    assert all(1.0 < m < 50.0 for m in means)


# -- parents -----------------------------------------------------------------


def _diamond_config():
    # 9x9 window, all rising diagonals except the four squares around the
    # center, whose diagonals avoid it: the center is then a singleton
    # cluster ringed by the 4-cycle through its lattice neighbors
    diag = np.zeros((8, 8), dtype=np.int8)
    diag[3, 3] = 1
    diag[4, 3] = 0
    diag[4, 4] = 1
    diag[3, 4] = 0
    rng = np.random.default_rng(1)
    v = rng.random((9, 9))
    w = rng.choice([-1, 1], (9, 9))
    return PercWindow(Window((0, 0), (9, 9)), diag, v, w)


def test_singleton_parent_is_surrounding_diamond():
    perc = _diamond_config()
    coords, closed = perc.cluster_of((4, 4))
    assert closed and len(coords) == 1
    cid = perc.cluster_id((4, 4))
    pid = perc.parent_of(cid)
    assert pid == perc.cluster_id((5, 4)) == perc.cluster_id((3, 4)) \
        == perc.cluster_id((4, 5)) == perc.cluster_id((4, 3))
    assert pid != cid


def _surrounders(perc, cid):
    """Adjacent clusters blocking every 4-adjacent path to the window rim."""
    from collections import deque

    lab = perc.labels
    nx, ny = lab.shape
    mask = lab == cid
    adjacent = set()
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        shifted = np.full(lab.shape, -1)
        src = mask[max(-di, 0):nx - max(di, 0), max(-dj, 0):ny - max(dj, 0)]
        shifted[max(di, 0):nx - max(-di, 0), max(dj, 0):ny - max(-dj, 0)] = \
            np.where(src, 1, -1)
        adjacent.update(np.unique(lab[shifted == 1]).tolist())
    adjacent.discard(cid)
    out = []
    for other in adjacent:
        blocked = lab == other
        seen = mask.copy()
        queue = deque(map(tuple, np.argwhere(mask)))
        escaped = False
        while queue:
            i, j = queue.popleft()
            if i in (0, nx - 1) or j in (0, ny - 1):
                escaped = True
                break
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                a, b = i + di, j + dj
                if not seen[a, b] and not blocked[a, b]:
                    seen[a, b] = True
                    queue.append((a, b))
        if not escaped:
            out.append(other)
    return out


@pytest.mark.parametrize("seed", [7, 19])
def test_parent_is_the_unique_surrounding_adjacent_cluster(seed):
    # path-blocking oracle: a 4-adjacent path can only cross a drawn
    # diagonal at one of its endpoints, so a surrounding cluster is one
    # whose removal disconnects the cluster from the window rim
    perc = PercWindow.build(LabelField(seed), Window((0, 0), (33, 33)))
    checked = 0
    for cid in np.nonzero(perc.closed)[0]:
        blockers = _surrounders(perc, int(cid))
        assert len(blockers) == 1
        assert blockers[0] == perc.parent[cid]
        checked += 1
    assert checked > 50


def test_parent_antisymmetric_and_opposite_parity():
    f = LabelField(11)
    win = Window((0, 0), (65, 65))
    perc = PercWindow.build(f, win)
    par = parity_grid(win)
    cpar = np.zeros(perc.nclusters, dtype=int)
    cpar[perc.labels] = par
    p = perc.parent
    known = np.nonzero(p != UNKNOWN)[0]
    assert known.size > 100
    assert (p[known] != known).all()
    assert (cpar[known] != cpar[p[known]]).all()
    both = known[p[p[known]] != UNKNOWN]
    assert (p[p[both]] != both).all()


def test_adjacent_clusters_are_always_nested():
    f = LabelField(11)
    perc = PercWindow.build(f, Window((0, 0), (257, 257)))
    lab, p = perc.labels, perc.parent
    pairs = np.concatenate([
        np.stack([lab[:-1, :].ravel(), lab[1:, :].ravel()], 1),
        np.stack([lab[:, :-1].ravel(), lab[:, 1:].ravel()], 1)])
    pairs = np.unique(pairs, axis=0)
    known = (p[pairs[:, 0]] != UNKNOWN) & (p[pairs[:, 1]] != UNKNOWN)
    ke = pairs[known]
    assert len(ke) > 500
    nested = (p[ke[:, 0]] == ke[:, 1]) | (p[ke[:, 1]] == ke[:, 0])
    assert nested.all()


# -- labels and colors -------------------------------------------------------


def test_color_rule_matches_independent_walk():
    perc = PercWindow.build(LabelField(13), Window((0, 0), (129, 129)))
    for cid in range(perc.nclusters):
        if not perc.color_known[cid]:
            assert perc.color[cid] == 0
            continue
        steps, cur = 0, cid
        while not perc.special[cur]:
            assert perc.special_known[cur]
            cur = int(perc.parent[cur])
            steps += 1
        want = 1 if steps == 0 else (2 if steps % 2 == 1 else 3)
        assert perc.color[cid] == want


def test_parent_and_child_colors_differ():
    perc = PercWindow.build(LabelField(13), Window((0, 0), (513, 513)))
    ids = np.nonzero(perc.color_known & (perc.parent != UNKNOWN))[0]
    ids = ids[perc.color_known[perc.parent[ids]]]
    assert ids.size > 20
    assert (perc.color[ids] != perc.color[perc.parent[ids]]).all()


def test_window_coloring_crops_and_reports_validity():
    colors, valid, _ = three2d_window(LabelField(17), Window((0, 0), (64, 64)),
                                      margin=96)
    assert valid.shape == (64, 64)
    assert np.array_equal(valid, colors > 0)
    assert set(np.unique(colors[valid])) <= {1, 2, 3}


def test_window_coloring_is_proper_on_resolved_vertices():
    # resolved vertices are sparse, so adjacent resolved pairs need scale
    perc = PercWindow.build(LabelField(11), Window((0, 0), (513, 513)))
    colors, valid = perc.colors_grid()
    checked = 0
    for sla, slb in ((np.s_[:-1, :], np.s_[1:, :]), (np.s_[:, :-1], np.s_[:, 1:])):
        both = valid[sla] & valid[slb]
        checked += int(both.sum())
        assert not ((colors[sla] == colors[slb]) & both).any()
    assert checked > 200


def test_relabeling_values_order_preserving_keeps_colors():
    f = LabelField(23)
    win = Window((0, 0), (65, 65))
    axes = win.axes()
    u = f.uniform_grid("three2d:u", axes)
    b = f.coin_grid("three2d:b", axes).astype(np.int64)
    du = (u[:-1, :-1] + u[1:, 1:]) - (u[1:, :-1] + u[:-1, 1:])
    bprime = b[:-1, :-1] * b[1:, :-1] * b[1:, 1:] * b[:-1, 1:]
    diag = np.where(du * bprime > 0, 0, 1).astype(np.int8)
    v = f.uniform_grid("three2d:v", axes)
    w = f.coin_grid("three2d:w", axes).astype(np.int64)
    base = PercWindow(win, diag, v, w)
    squashed = PercWindow(win, diag, v ** 3, w)
    assert np.array_equal(base.color, squashed.color)
    assert np.array_equal(base.color_known, squashed.color_known)


# -- per-vertex queries and radii --------------------------------------------


def test_survey_matches_demand_driven_query():
    f = LabelField(3)
    radii, resolved, colors, _ = coding_radii(f, Window((0, 0), (40, 40)), cap=256)
    picks = [tuple(map(int, p)) for p in np.argwhere(resolved)[:4]]
    assert picks, "window holds no resolved vertex; enlarge it"
    rng = np.random.default_rng(0)
    picks += [(int(a), int(b)) for a, b in rng.integers(0, 40, (12, 2))]
    for v in picks:
        try:
            c, r = three_color_2d(v, f, radius_cap=256)
            assert resolved[v]
            assert colors[v] == c
            assert radii[v] == r
        except BudgetExceeded:
            assert not resolved[v]


def test_window_schedule_does_not_change_answers():
    f = LabelField(3)
    radii, resolved, colors, _ = coding_radii(f, Window((0, 0), (48, 48)), cap=256)
    picks = np.argwhere(resolved)[:5]
    assert len(picks) >= 1
    for i, j in picks:
        v = (int(i), int(j))
        got = {three_color_2d(v, f, start_half=s, radius_cap=1024)[0]
               for s in (4, 8, 16)}
        assert got == {colors[v]}


def test_radius_cap_raises_budget_error():
    f = LabelField(3)
    with pytest.raises(BudgetExceeded) as err:
        three_color_2d((0, 0), f, radius_cap=8)
    assert err.value.kind == "radius"


def test_tracked_query_and_perturbation_replay():
    from ffcolor.field import Budget, Tracker, TrackedField

    base = LabelField(3)
    radii, resolved, colors, _ = coding_radii(base, Window((0, 0), (48, 48)),
                                              cap=256)
    picks = [tuple(map(int, p)) for p in np.argwhere(resolved)[:3]]
    picks += [(0, 0)] if not resolved[0, 0] else []
    alt = LabelField(999)
    for v in picks:
        tr = Tracker(v, Budget(radius_cap=256, access_cap=10**9))
        tf = TrackedField(base, tr)
        try:
            first = three_color_2d(v, tf, radius_cap=256)
        except BudgetExceeded:
            first = "censored"
        pf = PerturbedField(base, tr, alt)
        try:
            replay = three_color_2d(v, pf, radius_cap=256)
        except BudgetExceeded:
            replay = "censored"
        assert first == replay


def test_survival_tail_is_a_decreasing_power_law():
    radii = []
    resolved = []
    for seed in range(4):
        r, ok, _, _ = coding_radii(LabelField(100 + seed),
                                   Window((0, 0), (72, 72)), cap=256)
        radii.append(r.ravel())
        resolved.append(ok.ravel())
    radii = np.concatenate(radii)
    resolved = np.concatenate(resolved)
    n = len(radii)
    assert n >= 20_000
    rs = np.array([8, 16, 32, 64, 128])
    surv = np.array([((radii > r) | ~resolved).sum() / n for r in rs])
    assert (np.diff(surv) <= 0).all()
    assert surv[-1] < surv[0]
    slope = np.polyfit(np.log(rs), np.log(surv), 1)[0]
    assert -2.0 < slope < 0.0


def test_resolved_colors_match_between_survey_and_window():
    f = LabelField(29)
    win = Window((5, 9), (40, 40))
    radii, resolved, colors, _ = coding_radii(f, win, cap=256)
    wcolors, wvalid, _ = three2d_window(f, win, margin=130)
    both = resolved & wvalid
    assert both.sum() >= 1
    assert np.array_equal(colors[both], wcolors[both])


def test_three_color_2d_rejects_wrong_dimension():
    f = LabelField(3)
    with pytest.raises(ValueError):
        three_color_2d((1, 2, 3), f)
