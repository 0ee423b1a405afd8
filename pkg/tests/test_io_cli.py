from pathlib import Path

import numpy as np
import pytest

from zinbreg import io as zio
from zinbreg.cli import main, parse_config
from zinbreg.data import CountMatrix, CovariateMatrix, GroupAssignment
from zinbreg.errors import NonIntegerCount, ParseError, UnalignedSampleIds, UsageError
from zinbreg.simulate import SimConfig, generate


@pytest.fixture
def tiny_files(tmp_path):
    cfg = SimConfig(n=12, p=10, n_disc=3, n_covariates=2, m_active=1,
                    total_min=20_000, total_max=40_000, pi0=0.3, seed=3)
    counts, covs, groups, truth = generate(cfg)
    zio.write_counts(tmp_path / "counts.csv", counts)
    zio.write_covariates(tmp_path / "covariates.csv", covs, counts.sample_ids)
    zio.write_groups(tmp_path / "groups.csv", groups, counts.sample_ids)
    zio.write_truth(tmp_path / "truth.csv", counts.feature_ids, covs.covariate_ids, truth)
    return tmp_path, counts, covs, groups, truth


def test_counts_round_trip(tiny_files):
    tmp, counts, *_ = tiny_files
    back = zio.read_counts(tmp / "counts.csv")
    np.testing.assert_array_equal(back.counts, counts.counts)
    assert back.sample_ids == counts.sample_ids
    assert back.feature_ids == counts.feature_ids


def test_covariates_round_trip(tiny_files):
    tmp, counts, covs, *_ = tiny_files
    back, ids = zio.read_covariates(tmp / "covariates.csv")
    np.testing.assert_allclose(back.values, covs.values, rtol=1e-9)
    assert ids == counts.sample_ids


def test_truth_round_trip(tiny_files):
    tmp, counts, covs, groups, truth = tiny_files
    fids, cids, gamma, mu2, beta = zio.read_truth(tmp / "truth.csv")
    assert fids == counts.feature_ids
    assert cids == covs.covariate_ids
    np.testing.assert_array_equal(gamma, truth.gamma_true)
    np.testing.assert_allclose(beta, truth.beta_true, rtol=1e-9)


def test_tsv_round_trip(tmp_path):
    counts = CountMatrix([[1, 2], [3, 0]], ("a", "b"), ("f1", "f2"))
    zio.write_counts(tmp_path / "c.tsv", counts)
    text = (tmp_path / "c.tsv").read_text()
    assert "\t" in text and "," not in text
    back = zio.read_counts(tmp_path / "c.tsv")
    np.testing.assert_array_equal(back.counts, counts.counts)


def test_non_integer_count_located(tmp_path):
    (tmp_path / "bad.csv").write_text("sample_id,f1\ns1,3.5\ns2,1\n")
    with pytest.raises(NonIntegerCount, match="2:2"):
        zio.read_counts(tmp_path / "bad.csv")


def test_unparseable_count_is_parse_error(tmp_path):
    (tmp_path / "bad.csv").write_text("sample_id,f1\ns1,xyz\ns2,1\n")
    with pytest.raises(ParseError):
        zio.read_counts(tmp_path / "bad.csv")


def test_ragged_row_is_parse_error(tmp_path):
    (tmp_path / "bad.csv").write_text("sample_id,f1,f2\ns1,1\n")
    with pytest.raises(ParseError):
        zio.read_counts(tmp_path / "bad.csv")


def test_alignment_reorders_rows(tiny_files):
    tmp, counts, covs, groups, _ = tiny_files
    perm = np.random.default_rng(0).permutation(counts.n)
    shuffled_ids = tuple(counts.sample_ids[i] for i in perm)
    cov_s = CovariateMatrix(covs.values[perm], covs.covariate_ids)
    grp_s = GroupAssignment(groups.labels[perm], groups.n_groups)
    cov_a, grp_a = zio.align_to_counts(counts, cov_s, shuffled_ids, grp_s, shuffled_ids)
    np.testing.assert_allclose(cov_a.values, covs.values)
    np.testing.assert_array_equal(grp_a.labels, groups.labels)


def test_alignment_missing_sample_named(tiny_files):
    tmp, counts, covs, groups, _ = tiny_files
    with pytest.raises(UnalignedSampleIds, match="sample_1"):
        zio.align_to_counts(
            counts, covs, tuple(f"x{i}" for i in range(counts.n)),
            groups, counts.sample_ids,
        )


def test_parse_config_requires_inputs():
    with pytest.raises(UsageError):
        parse_config(["fit"])


def test_parse_config_defaults_and_precedence(tmp_path, tiny_files):
    src, *_ = tiny_files
    conf = tmp_path / "run.conf"
    conf.write_text("fdr = 0.1\nchains = 3\nnorm = gmpr\n")
    cfg = parse_config([
        "fit",
        "--counts", str(src / "counts.csv"),
        "--covariates", str(src / "covariates.csv"),
        "--groups", str(src / "groups.csv"),
        "--config", str(conf),
        "--fdr", "0.2",
    ])
    assert cfg.fdr == 0.2            # flag beats file
    assert cfg.chains == 3           # file beats default
    assert cfg.norm == "gmpr"
    assert cfg.iterations == 20000   # default
    assert cfg.provenance["fdr"] == "flag"
    assert cfg.provenance["chains"] == "file"


def test_parse_config_rejects_unknown_file_key(tmp_path, tiny_files):
    src, *_ = tiny_files
    conf = tmp_path / "run.conf"
    conf.write_text("no_such_option = 1\n")
    with pytest.raises(UsageError, match="no_such_option"):
        parse_config([
            "fit",
            "--counts", str(src / "counts.csv"),
            "--covariates", str(src / "covariates.csv"),
            "--groups", str(src / "groups.csv"),
            "--config", str(conf),
        ])


def test_main_usage_error_exit_code():
    assert main(["fit"]) == 1
    assert main(["fit", "--counts", "/nonexistent.csv",
                 "--covariates", "/no.csv", "--groups", "/no.csv"]) == 1


def _fit_args(src, out, extra=()):
    return [
        "fit",
        "--counts", str(src / "counts.csv"),
        "--covariates", str(src / "covariates.csv"),
        "--groups", str(src / "groups.csv"),
        "--out", str(out),
        "--chains", "2",
        "--iterations", "150",
        "--seed", "42",
        "--no-filter",
        *extra,
    ]


FIT_OUTPUTS = (
    "ppi_gamma.csv", "ppi_delta.csv", "posterior_summary.csv",
    "convergence.csv", "size_factors.csv", "run_config.resolved",
)


def test_fit_smoke_writes_all_outputs(tiny_files, tmp_path):
    src, counts, *_ = tiny_files
    out = tmp_path / "fit_out"
    code = main(_fit_args(src, out))
    assert code in (0, 3)
    for name in FIT_OUTPUTS:
        assert (out / name).exists(), name
    ids, ppi, sel = zio.read_ppi_gamma(out / "ppi_gamma.csv")
    assert ids == counts.feature_ids
    assert np.all((ppi >= 0) & (ppi <= 1))


def test_fit_data_error_exit_code(tmp_path, tiny_files):
    src, *_ = tiny_files
    bad = tmp_path / "bad.csv"
    bad.write_text("sample_id,f1\ns1,2.5\ns2,1\n")
    code = main([
        "fit", "--counts", str(bad),
        "--covariates", str(src / "covariates.csv"),
        "--groups", str(src / "groups.csv"),
        "--out", str(tmp_path / "o"),
    ])
    assert code == 2


def test_fit_prior_only_gamma_ppi_near_prior_mean(tiny_files, tmp_path):
    src, *_ = tiny_files
    out = tmp_path / "prior_out"
    code = main(_fit_args(src, out, extra=("--prior-only", "--iterations", "2000")))
    assert code in (0, 3)
    _, ppi, _ = zio.read_ppi_gamma(out / "ppi_gamma.csv")
    assert abs(ppi.mean() - 0.1) < 0.05


def test_fit_byte_identical_reruns(tiny_files, tmp_path, monkeypatch):
    src, *_ = tiny_files
    for d in ("run1", "run2"):
        work = tmp_path / d
        work.mkdir()
        for name in ("counts.csv", "covariates.csv", "groups.csv"):
            (work / name).write_bytes((src / name).read_bytes())
        monkeypatch.chdir(work)
        assert main(_fit_args(Path("."), Path("res"))) in (0, 3)
    for name in FIT_OUTPUTS:
        a = (tmp_path / "run1" / "res" / name).read_bytes()
        b = (tmp_path / "run2" / "res" / name).read_bytes()
        assert a == b, f"{name} differs between reruns"


def test_simulate_then_fit_then_evaluate(tmp_path):
    sim_out = tmp_path / "sim"
    assert main([
        "simulate", "--n", "12", "--p", "10", "--n-disc", "3",
        "--n-covariates", "2", "--m-active", "1",
        "--total-min", "20000", "--total-max", "40000",
        "--pi0", "0.3", "--sim-seed", "3", "--out", str(sim_out),
    ]) == 0
    fit_out = tmp_path / "fit"
    assert main(_fit_args(sim_out, fit_out)) in (0, 3)
    eval_out = tmp_path / "eval"
    assert main([
        "evaluate", "--fit-dir", str(fit_out),
        "--truth", str(sim_out / "truth.csv"), "--out", str(eval_out),
    ]) == 0
    text = (eval_out / "score_report.csv").read_text().splitlines()
    assert text[0].startswith("auc_gamma,")
    assert len(text) == 2


def test_sim_study_smoke(tmp_path):
    out = tmp_path / "study"
    code = main([
        "sim-study", "--replicates", "1", "--n", "12", "--p", "10",
        "--n-disc", "3", "--n-covariates", "2", "--m-active", "1",
        "--total-min", "20000", "--total-max", "40000", "--pi0", "0.3",
        "--chains", "2", "--iterations", "150", "--seed", "5",
        "--sim-seed", "7", "--out", str(out), "--no-filter",
    ])
    assert code == 0
    scores = (out / "replicate_scores.csv").read_text().splitlines()
    assert len(scores) == 2
    assert (out / "aggregate.csv").exists()
    assert (out / "roc_gamma_rep0.csv").exists()
    assert (out / "roc_delta_rep0.csv").exists()


def test_trace_dump_written(tiny_files, tmp_path):
    src, *_ = tiny_files
    out = tmp_path / "dump"
    assert main(_fit_args(src, out, extra=("--trace-dump",))) in (0, 3)
    dump = (out / "trace_chain0.csv").read_text().splitlines()
    assert dump[0] == "iteration,log_posterior,sum_gamma"
    assert len([l for l in dump if not l.startswith("#")]) == 151
    assert any(l.startswith("# accept") for l in dump)


def test_fit_convergence_warning_exit_code(tiny_files, tmp_path):
    src, *_ = tiny_files
    out = tmp_path / "conv"
    code = main(_fit_args(src, out, extra=(
        "--iterations", "100", "--convergence-floor", "0.9999",
    )))
    assert code == 3
    # outputs are still written on the warning path
    for name in FIT_OUTPUTS:
        assert (out / name).exists(), name


def test_fit_numerical_failure_exit_code(tiny_files, tmp_path, monkeypatch):
    import zinbreg.cli as cli_mod
    from zinbreg.errors import NumericalFailure

    def explode(*args, **kwargs):
        raise NumericalFailure(17)

    monkeypatch.setattr(cli_mod, "run_chains_parallel", explode)
    src, *_ = tiny_files
    code = main(_fit_args(src, tmp_path / "numfail"))
    assert code == 4
