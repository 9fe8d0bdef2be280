"""Subject screening: behavioral checks, golden agreement, statistical rejection."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from piqflow.datamodel import (
    DistortionCategory,
    LensesWorn,
    RatingRecord,
    SessionRecord,
)
from piqflow.screening import (
    GOLDEN_MIN_ITEMS,
    InsufficientDataError,
    REASON_BT500_OUTLIER,
    REASON_GOLDEN_MISMATCH,
    REASON_HAPHAZARD,
    REASON_NO_LENSES,
    REASON_REPEAT_INCONSISTENT,
    REASON_SLIDER_DEGENERATE,
    ScreenVerdict,
    bt500_reject,
    check_golden,
    check_mid_session,
    check_repeats,
    load_verdicts,
    save_report_json,
    save_verdicts,
    screen_all,
    screen_report,
)
from piqflow.simulate import (
    SimulatedRaterConfig,
    default_ground_truth,
    simulate_study,
)

NONE_FLAGS = tuple(c == DistortionCategory.NONE for c in DistortionCategory)
BLUR_FLAGS = tuple(c == DistortionCategory.BLURRY for c in DistortionCategory)


def rating(subject="s", item="i", quality=50.0, pos=0, flags=NONE_FLAGS,
           **kw):
    return RatingRecord(subject, item, quality, flags, pos, **kw)


def ratings_with_scores(scores, flags=None):
    out = []
    for i, q in enumerate(scores):
        f = flags[i] if flags is not None else NONE_FLAGS
        out.append(rating(item=f"i{i}", quality=q, pos=i, flags=f))
    return out


class TestMidSession:
    def test_needs_ten_ratings(self):
        with pytest.raises(InsufficientDataError):
            check_mid_session(ratings_with_scores([50.0] * 9))

    def test_all_equal_is_slider_degenerate(self):
        got = check_mid_session(ratings_with_scores([50.0] * 55))
        assert got == REASON_SLIDER_DEGENERATE

    def test_alternating_extremes_is_haphazard(self):
        scores = [1.0 if i % 2 == 0 else 99.0 for i in range(55)]
        # labels vary so the label-set rule stays quiet and the score pattern
        # alone drives the outcome: median lag-1 jump is 98, over the 60 bar
        flags = [NONE_FLAGS if i % 3 else BLUR_FLAGS for i in range(55)]
        got = check_mid_session(ratings_with_scores(scores, flags))
        assert got == REASON_HAPHAZARD

    def test_faithful_rater_is_clean(self):
        truth = default_ground_truth(n_items=55, rng_seed=3)
        sessions = simulate_study(
            [SimulatedRaterConfig("f", "faithful", label_flip_prob=0.1)],
            truth, rng_seed=4, n_repeats=0)
        assert check_mid_session(sessions[0].main_ratings()) is None

    def test_stddev_threshold_boundary(self):
        # stddev just under 2.5 trips the check, comfortably above passes
        tight = np.array([50.0, 52.0] * 10)  # population stddev 1.0
        assert check_mid_session(ratings_with_scores(tight)) == \
            REASON_SLIDER_DEGENERATE
        varied_scores = [20.0, 60.0, 35.0, 80.0, 50.0, 10.0, 70.0, 45.0,
                         90.0, 30.0, 55.0, 65.0]
        varied_flags = [NONE_FLAGS if i % 2 else BLUR_FLAGS
                        for i in range(len(varied_scores))]
        assert check_mid_session(
            ratings_with_scores(varied_scores, varied_flags)) is None

    def test_same_labelset_share(self):
        # 95% identical label sets: degenerate even though scores vary
        scores = list(np.linspace(5, 95, 20))
        flags = [BLUR_FLAGS] * 19 + [NONE_FLAGS]
        assert check_mid_session(ratings_with_scores(scores, flags)) == \
            REASON_SLIDER_DEGENERATE
        # exactly 90% is allowed (strict > in the rule)
        flags = [BLUR_FLAGS] * 18 + [NONE_FLAGS] * 2
        assert check_mid_session(ratings_with_scores(scores, flags)) is None


def session_with_repeat_diffs(diffs):
    """Build a session whose repeat pairs have exactly these |first-second|."""
    recs = []
    pos = 0
    for k, d in enumerate(diffs):
        first = 40.0
        second = min(100.0, first + d)
        recs.append(rating(item=f"r{k}", quality=first, pos=pos, is_repeat=True))
        recs.append(rating(item=f"r{k}", quality=second, pos=pos + 1,
                           is_repeat=True))
        pos += 2
    return SessionRecord("s", tuple(recs))


class TestRepeats:
    def test_all_under_tolerance_passes(self):
        res = check_repeats(session_with_repeat_diffs([3, 7, 1, 12, 5]))
        assert res.passed and res.n_failures == 0
        assert res.diffs == (3, 7, 1, 12, 5)

    def test_three_violations_fail(self):
        res = check_repeats(session_with_repeat_diffs([45, 50, 60, 2, 1]))
        assert not res.passed and res.n_failures == 3

    def test_exactly_two_violations_allowed(self):
        res = check_repeats(session_with_repeat_diffs([25, 25, 3, 3, 3]))
        assert res.passed and res.n_failures == 2

    def test_boundary_diff_equal_tol_is_fine(self):
        res = check_repeats(session_with_repeat_diffs([20, 20, 20, 20]))
        assert res.passed and res.n_failures == 0

    def test_no_pairs_is_an_error(self):
        s = SessionRecord("s", (rating(item="a"),))
        with pytest.raises(InsufficientDataError):
            check_repeats(s)


def golden_session(subject_scores, reference):
    recs = [rating(item=f"g{k}", quality=q, pos=k, is_golden=True)
            for k, q in enumerate(subject_scores)]
    ref = {f"g{k}": r for k, r in enumerate(reference)}
    return SessionRecord("s", tuple(recs)), ref


class TestGolden:
    def test_identical_scores_pass_with_unit_lcc(self):
        s, ref = golden_session([10, 30, 50, 70, 90], [10, 30, 50, 70, 90])
        res = check_golden(s, ref)
        assert res.passed and res.lcc == pytest.approx(1.0)

    def test_reversed_scores_fail(self):
        s, ref = golden_session([90, 70, 50, 30, 10], [10, 30, 50, 70, 90])
        res = check_golden(s, ref)
        assert not res.passed and res.lcc == pytest.approx(-1.0)

    def test_constant_shift_passes(self):
        s, ref = golden_session([20, 40, 60, 80, 100], [10, 30, 50, 70, 90])
        res = check_golden(s, ref)
        assert res.passed and res.lcc == pytest.approx(1.0)

    def test_needs_three_golden_items(self):
        s, ref = golden_session([10, 20], [10, 20])
        with pytest.raises(InsufficientDataError):
            check_golden(s, ref)
        assert GOLDEN_MIN_ITEMS == 3

    def test_zero_variance_subject_fails(self):
        s, ref = golden_session([50, 50, 50, 50], [10, 30, 60, 90])
        res = check_golden(s, ref)
        assert not res.passed and res.lcc is None

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.1, 4.0), st.floats(-20.0, 20.0))
    def test_positive_affine_invariance(self, slope, shift):
        base = [10.0, 30.0, 50.0, 70.0, 90.0]
        scaled = [min(100.0, max(0.0, slope * b + shift)) for b in base]
        if len(set(scaled)) < 2:
            return
        s, ref = golden_session(scaled, base)
        # clamping can break exact linearity at the rails; skip those
        if 0.0 in scaled or 100.0 in scaled:
            return
        assert check_golden(s, ref).passed


class TestBT500:
    def test_identical_scores_reject_nobody(self):
        matrix = {f"s{k}": {f"i{j}": 50.0 for j in range(5)} for k in range(4)}
        rejected, detail, skipped = bt500_reject(matrix)
        assert rejected == set()
        assert all(d == (0, 0, 5) for d in detail.values())
        assert skipped == 0

    def test_planted_antagonist_rejected(self):
        # a planted outlier has to clear the sqrt(20)-sigma bound it itself
        # inflates, so the offset sits well past 5 clean sigmas; per-rater
        # biases keep honest raters' rare deviations one-sided
        rng = np.random.default_rng(42)
        n_items = 40
        mus = rng.uniform(45, 55, n_items)
        matrix = {}
        for k in range(80):
            bias = rng.uniform(-8, 8)
            matrix[f"s{k:02d}"] = {
                f"i{j}": float(np.clip(mus[j] + bias + rng.normal(0, 6), 0, 100))
                for j in range(n_items)}
        # wild on 20% of items, alternating direction so the counts stay
        # two-sided
        plant = {}
        for j in range(n_items):
            if j % 5 == 0:
                off = 42.0 if (j // 5) % 2 == 0 else -42.0
                plant[f"i{j}"] = float(np.clip(mus[j] + off, 0, 100))
            else:
                plant[f"i{j}"] = float(np.clip(mus[j] + rng.normal(0, 6), 0, 100))
        matrix["zz_plant"] = plant
        rejected, detail, _ = bt500_reject(matrix)
        assert "zz_plant" in rejected
        # all honest raters survive
        assert rejected == {"zz_plant"}

    def test_symmetric_extremist_vs_onesided(self):
        # same large deviation share; the one-sided subject survives on the
        # sidedness ratio, the symmetric one does not
        rng = np.random.default_rng(7)
        n_items = 30
        matrix = {}
        for k in range(100):
            matrix[f"s{k:03d}"] = {
                f"i{j}": float(np.clip(50 + rng.normal(0, 5), 0, 100))
                for j in range(n_items)}
        matrix["sym"] = {f"i{j}": (95.0 if j % 2 == 0 else 5.0)
                         for j in range(n_items)}
        matrix["oneside"] = {f"i{j}": 95.0 for j in range(n_items)}
        rejected, detail, _ = bt500_reject(matrix)
        assert "sym" in rejected
        assert "oneside" not in rejected
        p, q, n = detail["oneside"]
        assert q == 0 and p > 0.05 * n

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(123)
        n_subj, n_items = 18, 25
        subjects = [f"s{k:02d}" for k in range(n_subj)]
        dense = rng.uniform(0, 100, (n_subj, n_items))
        # a couple of extremists so both branches of the rule fire
        dense[0] = np.clip(dense[0] * 0.2 + 90, 0, 100)
        dense[1, ::2] = 99.0
        matrix = {s: {f"i{j}": float(dense[k, j]) for j in range(n_items)}
                  for k, s in enumerate(subjects)}
        rejected, detail, skipped = bt500_reject(matrix)
        oracle = oracles.bt500_subject_brute(dense, subjects,
                                             [f"i{j}" for j in range(n_items)])
        for s in subjects:
            p, q, n = detail[s]
            op, oq, on, orej = oracle[s]
            assert (p, q, n) == (op, oq, on)
            assert (s in rejected) == orej
        assert skipped == 0

    def test_sparse_item_skipped(self):
        matrix = {
            "a": {"i1": 10.0, "i2": 20.0, "lonely": 99.0},
            "b": {"i1": 12.0, "i2": 22.0},
            "c": {"i1": 11.0, "i2": 21.0},
        }
        rejected, detail, skipped = bt500_reject(matrix)
        assert skipped == 1
        # the lonely rating never counts toward N
        assert detail["a"][2] == 2

    def test_needs_two_subjects_and_items(self):
        with pytest.raises(InsufficientDataError):
            bt500_reject({"a": {"i": 50.0}})
        with pytest.raises(InsufficientDataError):
            bt500_reject({"a": {"i": 50.0}, "b": {"i": 51.0}})

    def test_shift_invariance(self):
        rng = np.random.default_rng(5)
        matrix = {f"s{k}": {f"i{j}": float(rng.uniform(10, 60))
                            for j in range(12)} for k in range(8)}
        shifted = {s: {i: v + 17.5 for i, v in row.items()}
                   for s, row in matrix.items()}
        r1, d1, _ = bt500_reject(matrix)
        r2, d2, _ = bt500_reject(shifted)
        assert r1 == r2 and d1 == d2


def study_sessions(*, seed=0, n_items=55, faithful=8, extra=()):
    truth = default_ground_truth(n_items=n_items, rng_seed=11)
    raters = [SimulatedRaterConfig(f"f{k:02d}", "faithful", noise_stddev=8.0,
                                   bias=float(k - faithful / 2),
                                   label_flip_prob=0.08)
              for k in range(faithful)]
    raters.extend(extra)
    return simulate_study(raters, truth, rng_seed=seed), truth


class TestScreenAll:
    def test_antagonist_and_no_lenses_rejected(self):
        extra = (
            SimulatedRaterConfig("x_anti", "antagonist", noise_stddev=8.0),
            SimulatedRaterConfig("x_nolens", "faithful", noise_stddev=8.0,
                                 wore_prescribed_lenses=LensesWorn.NO),
        )
        sessions, truth = study_sessions(extra=extra)
        verdicts = screen_all(sessions, truth.golden_scores)
        by_id = {v.subject_id: v for v in verdicts}
        assert not by_id["x_anti"].accepted
        assert REASON_GOLDEN_MISMATCH in by_id["x_anti"].reasons
        assert not by_id["x_nolens"].accepted
        assert REASON_NO_LENSES in by_id["x_nolens"].reasons
        rejected = {v.subject_id for v in verdicts if not v.accepted}
        assert rejected == {"x_anti", "x_nolens"}

    def test_empty_input(self):
        assert screen_all([], {}) == []

    def test_order_independent(self):
        extra = (SimulatedRaterConfig("x_const", "constant"),)
        sessions, truth = study_sessions(extra=extra)
        fwd = screen_all(sessions, truth.golden_scores)
        rev = screen_all(list(reversed(sessions)), truth.golden_scores)
        assert fwd == rev

    def test_verdicts_sorted_by_subject(self):
        sessions, truth = study_sessions()
        verdicts = screen_all(sessions, truth.golden_scores)
        ids = [v.subject_id for v in verdicts]
        assert ids == sorted(ids)

    def test_constant_rater_reasons(self):
        extra = (SimulatedRaterConfig("x_const", "constant",
                                      constant_value=42.0),)
        sessions, truth = study_sessions(extra=extra)
        by_id = {v.subject_id: v for v in
                 screen_all(sessions, truth.golden_scores)}
        assert REASON_SLIDER_DEGENERATE in by_id["x_const"].reasons

    def test_missing_golden_reference_warns_not_aborts(self):
        sessions, _ = study_sessions()
        report = screen_report(sessions, golden_reference=None)
        assert len(report.verdicts) == len(sessions)
        assert any("golden" in w for w in report.warnings)

    def test_report_detail_has_bt500_counts(self):
        sessions, truth = study_sessions()
        report = screen_report(sessions, truth.golden_scores)
        accepted = [v.subject_id for v in report.verdicts if v.accepted]
        assert accepted
        for sid in accepted:
            assert "bt500" in report.detail[sid]


class TestVerdictSerialization:
    def test_verdict_invariant(self):
        with pytest.raises(Exception):
            ScreenVerdict("s", accepted=True, reasons=(REASON_BT500_OUTLIER,))
        with pytest.raises(Exception):
            ScreenVerdict("s", accepted=False, reasons=())
        with pytest.raises(Exception):
            ScreenVerdict("s", accepted=False, reasons=("made-up",))

    def test_csv_round_trip(self, tmp_path):
        verdicts = [
            ScreenVerdict("a", True, ()),
            ScreenVerdict("b", False, (REASON_HAPHAZARD, REASON_BT500_OUTLIER)),
            ScreenVerdict("c", False, (REASON_REPEAT_INCONSISTENT,)),
        ]
        path = tmp_path / "verdicts.csv"
        save_verdicts(verdicts, path)
        text = path.read_text()
        assert "subject_id,accepted,reasons" in text.splitlines()[0]
        assert "haphazard;bt500-outlier" in text
        assert load_verdicts(path) == verdicts

    def test_json_report(self, tmp_path):
        import json
        sessions, truth = study_sessions()
        report = screen_report(sessions, truth.golden_scores)
        path = tmp_path / "report.json"
        save_report_json(report, path)
        obj = json.loads(path.read_text())
        assert set(obj) == {"verdicts", "detail", "warnings"}
        assert len(obj["verdicts"]) == len(sessions)
