import random

import numpy as np
import pytest
from scipy import stats as sstats

from qoe_forge.subjective import (
    DegenerateRatingsError,
    GroupAggregate,
    RatingsMatrix,
    VideoFactors,
    append_rating_row,
    compute_mos,
    factor_summary,
    mos_pipeline,
    read_mos_csv,
    read_ratings_csv,
    reject_subjects,
    rescale_zscores,
    screen_raters,
    write_mos_csv,
    write_summary_csv,
    zscore_normalize,
)


def consensus_rows(rng, n_subjects=19, n_videos=40, base=3):
    """19 raters at base plus symmetric unit noise (kurtosis ~3 per video)."""
    rows = []
    for j in range(n_videos):
        for i in range(n_subjects):
            e = rng.choices([-1, 0, 1], weights=[1, 4, 1])[0]
            rows.append((f"s{i:02d}", f"v{j:02d}", base + e))
    return rows


def test_from_rows_shape_and_missing():
    m = RatingsMatrix.from_rows([("a", "v1", 3), ("a", "v2", 4), ("b", "v1", 2)])
    assert m.subjects == ("a", "b")
    assert m.videos == ("v1", "v2")
    assert np.isnan(m.scores[1, 1])
    assert list(m.per_subject_counts()) == [2, 1]
    assert list(m.per_video_counts()) == [2, 1]
    with pytest.raises(ValueError, match="duplicate"):
        RatingsMatrix.from_rows([("a", "v1", 3), ("a", "v1", 4)])
    with pytest.raises(ValueError, match=r"\[1, 5\]"):
        RatingsMatrix.from_rows([("a", "v1", 6)])


def test_zscore_two_point_example():
    m = RatingsMatrix.from_rows([("a", "v1", 1), ("a", "v2", 5)])
    z, degenerate = zscore_normalize(m)
    assert degenerate == []
    np.testing.assert_allclose(z[0], [-0.7071, 0.7071], atol=5e-5)


def test_zscore_degenerate_subjects():
    m = RatingsMatrix.from_rows(
        [("few", "v1", 3), ("flat", "v1", 2), ("flat", "v2", 2), ("ok", "v1", 1), ("ok", "v2", 5)]
    )
    z, degenerate = zscore_normalize(m)
    assert degenerate == ["few", "flat"]
    assert np.isnan(z[0]).all() and np.isnan(z[1]).all()
    assert not np.isnan(z[2]).all()


def test_reject_identical_scores_keeps_everyone():
    rows = [(f"s{i}", f"v{j}", 4) for i in range(5) for j in range(10)]
    retained, screens = reject_subjects(RatingsMatrix.from_rows(rows))
    assert len(retained) == 5
    assert all(not s.rejected for s in screens)
    assert all(s.outlier_high == 0 and s.outlier_low == 0 for s in screens)


def test_reject_two_sided_adversary():
    rng = random.Random(2024)
    rows = consensus_rows(rng)
    for j in range(40):
        rows.append(("adversary", f"v{j:02d}", 5 if j % 2 == 0 else 1))
    retained, screens = reject_subjects(RatingsMatrix.from_rows(rows))
    by_id = {s.subject_id: s for s in screens}
    assert by_id["adversary"].rejected
    assert "adversary" not in retained
    assert [s.subject_id for s in screens if s.rejected] == ["adversary"]
    # the counting itself is two-sided
    adv = by_id["adversary"]
    assert adv.outlier_high > 0 and adv.outlier_low > 0
    assert (adv.outlier_high + adv.outlier_low) / adv.ratings_count > 0.05


def test_one_sided_extremist_retained():
    # consistently harsh/kind raters fail the two-sidedness ratio and stay
    rng = random.Random(7)
    rows = consensus_rows(rng)
    for j in range(40):
        rows.append(("onesided", f"v{j:02d}", 5))
    retained, screens = reject_subjects(RatingsMatrix.from_rows(rows))
    one = {s.subject_id: s for s in screens}["onesided"]
    assert not one.rejected
    assert one.outlier_low == 0 and one.outlier_high > 0.05 * one.ratings_count
    assert "onesided" in retained


def test_reject_needs_three_subjects():
    m = RatingsMatrix.from_rows([("a", "v1", 1), ("b", "v1", 5)])
    with pytest.raises(ValueError, match=">= 3 subjects"):
        reject_subjects(m)


def test_rescale_zscores():
    z = np.array([-3.0, 0.0, 3.0, -4.5, 4.5])
    np.testing.assert_allclose(rescale_zscores(z), [1.0, 3.0, 5.0, 1.0, 5.0])
    assert rescale_zscores(np.array([1.5]))[0] == pytest.approx(4.0)


def test_compute_mos_single_subject_order():
    m = RatingsMatrix.from_rows([("a", "v1", 1), ("a", "v2", 3), ("a", "v3", 5)])
    table = compute_mos(m)
    np.testing.assert_allclose(table.mos, [7 / 3, 3.0, 11 / 3])
    assert list(table.rater_count) == [1, 1, 1]
    assert list(table.stddev) == [0.0, 0.0, 0.0]


def test_compute_mos_zero_z_is_midscale():
    rows = [(f"s{i}", "mid", 3) for i in range(4)]
    rows += [(f"s{i}", "hi", 5) for i in range(4)]
    rows += [(f"s{i}", "lo", 1) for i in range(4)]
    table = compute_mos(RatingsMatrix.from_rows(rows))
    assert table.mos[table.videos.index("mid")] == pytest.approx(3.0)


def test_compute_mos_affine_rater_invariance():
    rng = random.Random(11)
    latent = [1.5 + 2.5 * k / 39 for k in range(40)]
    rng.shuffle(latent)
    rows = []
    for i in range(20):
        a = 0.8 + 0.4 * rng.random()
        b = (1 - a) * 2.75
        for j, q in enumerate(latent):
            rows.append((f"r{i:02d}", f"v{j:02d}", a * q + b))
    table = compute_mos(RatingsMatrix.from_rows(rows))
    assert sstats.spearmanr(table.mos, latent).statistic == 1.0
    # every rater contributes the same z-pattern, so per-video spread is ~0
    assert float(table.stddev.max()) < 1e-9


def test_compute_mos_excluded_video():
    m = RatingsMatrix.from_rows(
        [("a", "v1", 1), ("a", "v2", 5), ("b", "v1", 2), ("b", "v2", 4), ("c", "v3", 3)]
    )
    # c rated only one video and is degenerate, leaving v3 with no ratings
    table = compute_mos(m)
    assert table.degenerate_subjects == ("c",)
    assert table.excluded_videos == ("v3",)
    assert table.videos == ("v1", "v2")


def test_compute_mos_degenerate():
    m = RatingsMatrix.from_rows([("a", "v1", 3), ("b", "v2", 4), ("c", "v3", 2)])
    with pytest.raises(DegenerateRatingsError):
        compute_mos(m)


def test_mos_pipeline_runs_rejection_then_mos():
    rng = random.Random(5)
    rows = consensus_rows(rng)
    for j in range(40):
        rows.append(("adversary", f"v{j:02d}", 5 if j % 2 == 0 else 1))
    table, screens = mos_pipeline(RatingsMatrix.from_rows(rows))
    assert "adversary" not in table.subjects
    assert any(s.rejected for s in screens)
    assert len(table.videos) == 40
    assert np.all((table.mos >= 1.0) & (table.mos <= 5.0))


def test_screen_raters_picks_consistent():
    rng = random.Random(31)
    latent = [1 + 4 * k / 29 for k in range(30)]
    rng.shuffle(latent)
    rows = []
    for i in range(10):
        for j, q in enumerate(latent):
            noisy = min(5.0, max(1.0, q + rng.gauss(0, 0.15)))
            rows.append((f"good{i}", f"v{j:02d}", noisy))
    for i in range(10):
        for j in range(30):
            rows.append((f"noise{i}", f"v{j:02d}", rng.uniform(1, 5)))
    picked = screen_raters(RatingsMatrix.from_rows(rows), k=10)
    assert sorted(picked) == [f"good{i}" for i in range(10)]
    with pytest.raises(ValueError):
        screen_raters(RatingsMatrix.from_rows(rows), k=0)


def test_screen_raters_tie_break_lexicographic():
    # two identical raters tie; the lexicographically smaller id wins the cut
    latent = [1.0, 2.0, 3.0, 4.0, 5.0]
    rows = []
    for name in ("zeta", "alpha"):
        for j, q in enumerate(latent):
            rows.append((name, f"v{j}", q))
    for j, q in enumerate(latent):
        rows.append(("anti", f"v{j}", 6 - q))
    picked = screen_raters(RatingsMatrix.from_rows(rows), k=1)
    assert picked == ["alpha"]


def test_ratings_csv_round_trip(tmp_path):
    path = tmp_path / "ratings.csv"
    append_rating_row(path, "s1", "v1", 4, "2026-01-01T00:00:00+00:00")
    append_rating_row(path, "s1", "v2", 2)
    append_rating_row(path, "s2", "v1", 5)
    m = read_ratings_csv(path)
    assert m.subjects == ("s1", "s2")
    assert m.videos == ("v1", "v2")
    assert m.scores[0, 0] == 4.0
    assert path.read_text().startswith("subject_id,video_id,score,timestamp_iso8601\n")
    # header written exactly once
    assert path.read_text().count("subject_id") == 1


def test_ratings_csv_errors(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("subject_id,video_id,score,timestamp_iso8601\n")
    with pytest.raises(ValueError, match="no rating rows"):
        read_ratings_csv(path)
    path.write_text("who,what,why\n")
    with pytest.raises(ValueError, match="expected header"):
        read_ratings_csv(path)
    path.write_text("subject_id,video_id,score,timestamp_iso8601\ns1,v1,abc,\n")
    with pytest.raises(ValueError, match="non-numeric"):
        read_ratings_csv(path)


def test_mos_csv_round_trip(tmp_path):
    m = RatingsMatrix.from_rows(
        [("a", "v1", 1), ("a", "v2", 5), ("b", "v1", 2), ("b", "v2", 4), ("c", "v1", 1), ("c", "v2", 3)]
    )
    table = compute_mos(m)
    path = tmp_path / "mos.csv"
    write_mos_csv(table, path)
    back = read_mos_csv(path)
    assert back.videos == table.videos
    np.testing.assert_allclose(back.mos, table.mos, atol=1e-6)
    np.testing.assert_array_equal(back.rater_count, table.rater_count)


def test_factor_summary_groups():
    m = RatingsMatrix.from_rows(
        [("a", v, s) for v, s in [("v1", 1), ("v2", 2), ("v3", 4), ("v4", 5)]]
        + [("b", v, s) for v, s in [("v1", 2), ("v2", 2), ("v3", 5), ("v4", 4)]]
    )
    table = compute_mos(m)
    factors = {
        "v1": VideoFactors((1920, 1080), "25/1", 22, 1, 1.0, "A1", 0.5),
        "v2": VideoFactors((1920, 1080), "25/1", 37, 2, 1.5, "B1", 1.0),
        "v3": VideoFactors((1280, 720), "30/1", 22, 0, 1.0, "clean", 0.0),
        "v4": VideoFactors((1280, 720), "20/1", 37, 0, 1.0, "clean", 0.0),
    }
    aggs = factor_summary(table, factors)
    crf_groups = [a for a in aggs if a.dimension == "crf"]
    assert {a.group for a in crf_groups} == {"22", "37"}
    assert all(a.count == 2 for a in crf_groups)
    res_groups = {a.group for a in aggs if a.dimension == "resolution"}
    assert res_groups == {"1920x1080", "1280x720"}
    ar_mode = {a.group for a in aggs if a.dimension == "ar_mode"}
    assert ar_mode == {"A1@AR1", "B1@AR1.5", "clean@AR1"}
    with pytest.raises(ValueError, match="no factors"):
        factor_summary(table, {k: v for k, v in factors.items() if k != "v4"})


def test_write_summary_csv(tmp_path):
    aggs = [GroupAggregate("crf", "22", 2, 3.0, 0.5, 2.5, 3.5)]
    path = tmp_path / "summary.csv"
    write_summary_csv(aggs, path)
    assert path.read_text() == (
        "dimension,group,count,mean_mos,std_mos,min_mos,max_mos\n"
        "crf,22,2,3.000000,0.500000,2.500000,3.500000\n"
    )
