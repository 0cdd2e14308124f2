"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Criteria 5-8 share one set of end-to-end runs on synthetic data (seeds 0-9,
4 subjects, 10 epochs, beta=100), built once per session.
"""
import copy
import math
import time

import numpy as np
import pytest
from scipy import integrate

from conftest import ACCEPTANCE
from gradcheck import max_rel_error, scalarize
from test_diffcore import GRAD_CASES
from test_losses import contrastive_oracle
from test_rsa import _t_pdf, partial_oracle, pearson_loop, spearman_oracle, upper

from realign import diffcore as dc
from realign.cli import main
from realign.data import average_repetitions, synth_generate
from realign.diffcore import Tensor
from realign.evaluation import eeg_curves, fmri_layer_rdms, fmri_scores, layer_rdms, window_score
from realign.losses import alignment_loss, classification_loss, contrastive_loss, mse_loss, pearson_r
from realign.models import EncodingHead, MiniCor
from realign.rsa import Rdm, fmri_rdm, model_rdm, partial_spearman_r2, rsa_compare, spearman, ttest_1samp
from realign.rsa.decoding import decoding_matrix, eeg_decoding_rdms
from realign.rsa.rdm import from_upper
from realign.rsa.stats import t_two_tailed_p, ttest_paired
from realign.trainer import AlignmentConfig, train_alignment

SEEDS = range(10)
ALPHA = 0.05
E2E_CONFIG = dict(beta=100.0, lr=1e-3, epochs=10, batch_size=16)
MODES = ("none", "scrambled", "unpaired", "no_cont")


def record(num: int, ok: bool, detail: str) -> None:
    ACCEPTANCE.append((num, bool(ok), detail))
    print(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def _fmt_t(res) -> str:
    return f"mean diff {res.mean:+.4f}, t({res.df:.0f})={res.t:.2f}, p={res.p:.4f}"


# ---------------------------------------------------------------------------
# 1. gradient suite


def test_criterion_01_gradient_suite():
    start = time.perf_counter()
    worst = 0.0
    cases = {name: (op if name in ("sum", "mean", "mse") else scalarize(op), shapes) for name, (op, shapes) in GRAD_CASES.items()}
    labels2 = np.array([1, 0])
    for seed in range(20):
        rng = np.random.default_rng(seed)
        for f, shapes in cases.values():
            worst = max(worst, max_rel_error(f, [rng.normal(size=s) for s in shapes]))
        worst = max(worst, max_rel_error(scalarize(dc.log), [rng.uniform(0.5, 2.0, size=(3, 3))]))
        labels = rng.integers(0, 5, size=4)
        worst = max(worst, max_rel_error(lambda z: classification_loss(z, labels), [rng.normal(size=(4, 5))]))
        worst = max(worst, max_rel_error(mse_loss, [rng.normal(size=(3, 6)), rng.normal(size=(3, 6))]))
        worst = max(worst, max_rel_error(pearson_r, [rng.normal(size=12), rng.normal(size=12)]))
        worst = max(worst, max_rel_error(contrastive_loss, [rng.normal(size=(3, 6)), rng.normal(size=(3, 6))]))
        composite = lambda lg, g, r: alignment_loss(lg, labels2, g, r, beta=100.0).total  # noqa: E731
        worst = max(worst, max_rel_error(composite, [rng.normal(size=(2, 3)), rng.normal(size=(2, 6)), rng.normal(size=(2, 6))]))
    elapsed = time.perf_counter() - start
    record(1, worst < 1e-4 and elapsed < 60, f"max rel error {worst:.2e} over 20 seeds, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 2. loss identities


def test_criterion_02_loss_identities():
    row = np.random.default_rng(3).normal(size=10)
    same = np.tile(row, (4, 1))
    one = contrastive_loss(Tensor(same), Tensor(same.copy())).item()
    a = 1e3 * np.array([1.0, -1.0, 1.0, -1.0])
    b = 1e3 * np.array([1.0, 1.0, -1.0, -1.0])
    orth = np.stack([a, b])
    zero = contrastive_loss(Tensor(orth), Tensor(orth.copy())).item()
    trivial_ok = abs(one - 1.0) < 1e-10 and abs(zero) < 1e-10

    rng = np.random.default_rng(6)
    logits, labels = rng.normal(size=(4, 5)), rng.integers(0, 5, size=4)
    gen, real = rng.normal(size=(4, 8)), rng.normal(size=(4, 8))
    args = (Tensor(logits), labels, Tensor(gen), Tensor(real))
    decomposition_ok = True
    for beta in (0.0, 1.0, 10.0, 100.0, 1000.0):
        t = alignment_loss(*args, beta)
        decomposition_ok &= t.total.item() == t.classification + beta * (t.mse + t.contrastive)
    oracle_ok = abs(contrastive_loss(Tensor(gen), Tensor(real)).item() - contrastive_oracle(gen, real)) < 1e-10
    no_cont = alignment_loss(*args, 100.0, use_contrastive=False)
    no_mse = alignment_loss(*args, 100.0, use_mse=False)
    ablation_ok = (
        no_cont.generation == mse_loss(Tensor(gen), Tensor(real)).item()
        and no_mse.generation == contrastive_loss(Tensor(gen), Tensor(real)).item()
        and no_cont.total.item() == no_cont.classification + 100.0 * no_cont.mse
        and no_mse.total.item() == no_mse.classification + 100.0 * no_mse.contrastive
    )
    ok = trivial_ok and decomposition_ok and oracle_ok and ablation_ok
    record(2, ok, f"trivial |1-{one:.12f}|, |{zero:.1e}|; decomposition exact={decomposition_ok}; ablations exact={ablation_ok}")


# ---------------------------------------------------------------------------
# 3. RDM / RSA oracles


def test_criterion_03_rdm_rsa_oracles():
    start = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(4, 11))
        for builder in (model_rdm, fmri_rdm):
            x = rng.normal(size=(n, 7))
            got = builder(x).values
            want = [[0.0 if i == j else 1 - pearson_loop(list(x[i]), list(x[j])) for j in range(n)] for i in range(n)]
            worst = max(worst, float(np.max(np.abs(got - np.array(want)))))
        tied_a = rng.integers(0, 4, size=n).astype(float)
        tied_b = rng.integers(0, 4, size=n).astype(float)
        if np.ptp(tied_a) > 0 and np.ptp(tied_b) > 0:
            worst = max(worst, abs(spearman(tied_a, tied_b) - spearman_oracle(tied_a, tied_b)))
        r1 = Rdm(from_upper(rng.uniform(size=n * (n - 1) // 2), n), "model")
        r2 = Rdm(from_upper(rng.uniform(size=n * (n - 1) // 2), n), "eeg")
        worst = max(worst, abs(rsa_compare(r1, r2) - spearman_oracle(upper(r1.values), upper(r2.values))))
        controls = [Rdm(from_upper(rng.uniform(size=n * (n - 1) // 2), n), "feature") for _ in range(2)]
        got = partial_spearman_r2(r1, r2, controls).r
        worst = max(worst, abs(got - partial_oracle(r1.values, r2.values, [c.values for c in controls])))
    elapsed = time.perf_counter() - start
    record(3, worst < 1e-8 and elapsed < 60, f"max |diff| {worst:.1e} over 20 instances (n<=10), {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 4. decoding calibration


def test_criterion_04_decoding_calibration():
    accs = []
    for seed in range(20):
        epochs = np.random.default_rng(seed).normal(size=(2, 80, 4, 1))
        accs.append(decoding_matrix(epochs, 0, seed=seed)[0, 1])
    chance = float(np.mean(accs))
    rng = np.random.default_rng(20)
    sep = 0.1 * rng.normal(size=(3, 12, 5, 1))
    sep[0] += 10.0
    sep[1] -= 10.0
    m = decoding_matrix(sep, 0, seed=1)
    separable = bool(m[0, 1] == m[0, 2] == m[1, 2] == 1.0)
    rdms = eeg_decoding_rdms(np.random.default_rng(21).normal(size=(5, 10, 3, 2)), seed=2, n_epochs=50)
    symmetric = all(np.array_equal(r.values, r.values.T) for r in rdms)
    ok = 0.45 <= chance <= 0.55 and separable and symmetric
    record(4, ok, f"chance mean {chance:.4f} (20 reps); separable={separable}; symmetric={symmetric}")


# ---------------------------------------------------------------------------
# 5-8. end-to-end synthetic runs


@pytest.fixture(scope="session")
def e2e():
    start = time.perf_counter()
    res = {k: [] for k in ("base", *MODES, "match", "mismatch", "fmri_base", "fmri_aligned")}
    for seed in SEEDS:
        bundle = synth_generate(n_images=32, n_subjects=4, latents=4, seed=seed, noise=0.1)
        subjects = bundle.subjects
        eeg = {s: eeg_decoding_rdms(bundle.eeg_test[s].eeg, seed=seed) for s in subjects}
        fmri = list(bundle.fmri.values())
        cats = fmri[0].categories

        def fmri_mean(model):
            return float(np.mean(list(fmri_scores(fmri_layer_rdms(model, bundle.fmri_images, cats), fmri).values())))

        base = MiniCor(seed=1000 + seed)
        base_rdms = layer_rdms(base, bundle.test_images)
        res["base"].append(np.mean([window_score(eeg_curves(base_rdms, eeg[s])) for s in subjects]))
        res["fmri_base"].append(fmri_mean(base))
        for mode in MODES:
            cross = np.zeros((len(subjects), len(subjects)))
            fm = []
            for i, s in enumerate(subjects):
                model = copy.deepcopy(base)
                head = EncodingHead.for_backbone(model, seed=2000 + seed)
                cfg = AlignmentConfig(seed=seed, control=mode, **E2E_CONFIG)
                train_alignment(model, head, average_repetitions(bundle.eeg_train[s]), cfg, teacher=base)
                rdms = layer_rdms(model, bundle.test_images)
                for j, s2 in enumerate(subjects):
                    cross[i, j] = window_score(eeg_curves(rdms, eeg[s2]))
                if mode == "none":
                    fm.append(fmri_mean(model))
            diag = np.diag(cross)
            res[mode].append(float(diag.mean()))
            if mode == "none":
                off = (cross.sum(axis=0) - diag) / (len(subjects) - 1)
                res["match"].append(float(diag.mean()))
                res["mismatch"].append(float(off.mean()))
                res["fmri_aligned"].append(float(np.mean(fm)))
    res = {k: np.array(v) for k, v in res.items()}
    res["elapsed"] = time.perf_counter() - start
    return res


@pytest.mark.slow
def test_criterion_05_alignment_beats_baseline_and_scrambled(e2e):
    vs_base = ttest_paired(e2e["none"], e2e["base"])
    vs_scr = ttest_paired(e2e["none"], e2e["scrambled"])
    ok = (
        vs_base.mean > 0 and vs_base.p < ALPHA and vs_scr.mean > 0 and vs_scr.p < ALPHA
        and len(SEEDS) >= 8 and e2e["elapsed"] < 15 * 60
    )
    record(5, ok, f"vs baseline: {_fmt_t(vs_base)}; vs scrambled: {_fmt_t(vs_scr)}; {len(SEEDS)} seeds, {e2e['elapsed']:.0f}s")


@pytest.mark.slow
def test_criterion_06_control_dissociation(e2e):
    scr = ttest_paired(e2e["scrambled"], e2e["base"])
    unp = ttest_paired(e2e["unpaired"], e2e["base"])
    nc = ttest_paired(e2e["no_cont"], e2e["base"])
    ok = scr.p >= ALPHA and unp.p >= ALPHA and nc.mean > 0 and nc.p < ALPHA
    record(6, ok, f"scrambled: p={scr.p:.3f}; unpaired: p={unp.p:.3f}; no_cont vs baseline: {_fmt_t(nc)}")


@pytest.mark.slow
def test_criterion_07_cross_modal_generalisation(e2e):
    res = ttest_paired(e2e["fmri_aligned"], e2e["fmri_base"])
    record(7, res.mean > 0 and res.p < ALPHA, f"fMRI RSA aligned vs baseline: {_fmt_t(res)}")


@pytest.mark.slow
def test_criterion_08_subject_specificity(e2e):
    res = ttest_paired(e2e["match"], e2e["mismatch"])
    ok = res.mean > 0 and res.p < ALPHA and len(SEEDS) >= 8
    record(8, ok, f"matched vs mismatched: {_fmt_t(res)} (full-scale reference t=5.6068, not matched)")


# ---------------------------------------------------------------------------
# 9. statistics battery


def test_criterion_09_statistics_battery():
    res = ttest_1samp([1, 2, 3, 4, 5], 0.0)
    sd = math.sqrt(sum((x - 3) ** 2 for x in range(1, 6)) / 4)
    worst = max(abs(res.t - 3 / (sd / math.sqrt(5))), abs(res.d - 3 / sd))
    for t, df in [(res.t, 4), (0.3, 9), (2.1, 7), (-1.7, 3), (6.0, 12)]:
        tail, _ = integrate.quad(_t_pdf, abs(t), np.inf, args=(df,), epsabs=1e-14, epsrel=1e-12)
        worst = max(worst, abs(t_two_tailed_p(t, df) - 2 * tail))
    worst = max(worst, abs(res.p - t_two_tailed_p(res.t, 4)))
    record(9, worst < 1e-6, f"max |diff| {worst:.1e} (closed-form t, d; quadrature p)")


# ---------------------------------------------------------------------------
# 10. reproducibility


def _artifacts(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "manifest.txt"}


def test_criterion_10_reproducibility(tmp_path):
    fast = ["--svm-epochs", "20"]

    def commands(root):
        data, base, run = root / "data", root / "base" / "checkpoint.rtf", root / "run" / "checkpoint.rtf"
        return {
            "synth": ["synth", "--subjects", "2", "--test-images", "8", "--seed", "3", "--out", data],
            "init": ["init", "--seed", "1", "--out", root / "base"],
            "train": ["train", "--data", data, "--subject", "sub-01", "--control", "scrambled", "--epochs", "2",
                      "--lr", "1e-3", "--seed", "4", "--out", root / "run"],
            "eeg": ["eval", "eeg", "--data", data, "--checkpoint", run, "--baseline", base, *fast, "--out", root / "eeg"],
            "fmri": ["eval", "fmri", "--data", data, "--checkpoint", run, "--baseline", base, "--out", root / "fmri"],
            "variability": ["eval", "variability", "--data", data, "--checkpoints", run, base, "--out", root / "var"],
            "cross": ["eval", "cross-subject", "--data", data, "--checkpoints", run, base, *fast, "--out", root / "cross"],
            "features": ["eval", "features", "--data", data, "--checkpoint", run, "--baseline", base, "--out", root / "feat"],
            "stats": ["eval", "stats", "--a", root / "eeg" / "curves.csv", root / "fmri" / "fmri.csv",
                      root / "cross" / "cross_subject.csv", "--column", "rho", "--out", root / "stats"],
        }

    outputs = []
    for name in ("a", "b"):
        root = tmp_path / name
        codes = {k: main([str(x) for x in argv]) for k, argv in commands(root).items()}
        outputs.append((root, codes))
    (ra, ca), (rb, cb) = outputs
    dirs = ["data", "base", "run", "eeg", "fmri", "var", "cross", "feat", "stats"]
    mismatched = [d for d in dirs if _artifacts(ra / d) != _artifacts(rb / d)]
    codes_ok = all(c == 0 for c in ca.values()) and ca == cb
    n_files = sum(len(_artifacts(ra / d)) for d in dirs)
    record(10, not mismatched and codes_ok, f"{n_files} RTF/CSV files across {len(dirs)} commands; mismatched: {mismatched or 'none'}")
