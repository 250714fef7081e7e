"""Density estimation: direct-sum oracle, normalization, table coverage."""

import math

import numpy as np
import pytest
from scipy.integrate import simpson

from passivewifi.kde import (KernelSpec, NoSamplesError, PdfTable, RssiPdf,
                             evaluate, fit, fit_all_pdfs, pooled_fit)

from conftest import make_synthetic_db

KERNELS = ("gaussian", "epanechnikov", "tophat")


def direct_density(samples, h, kind, v):
    total = 0.0
    for s in samples:
        u = (v - s) / h
        if kind == "gaussian":
            total += math.exp(-0.5 * u * u) / math.sqrt(2 * math.pi)
        elif kind == "epanechnikov":
            total += 0.75 * (1 - u * u) if abs(u) <= 1 else 0.0
        else:
            total += 0.5 if abs(u) <= 1 else 0.0
    return total / (len(samples) * h)


@pytest.mark.parametrize("kind", KERNELS)
def test_fit_evaluate_matches_direct_sum(kind):
    rng = np.random.default_rng(2)
    for trial in range(30):
        samples = rng.normal(-62, 5, size=int(rng.integers(1, 60)))
        pdf = fit(samples, KernelSpec(kind, bandwidth=float(rng.uniform(0.5, 4))))
        for v in rng.uniform(-85, -40, size=5):
            want = direct_density(samples, pdf.kernel.bandwidth, kind, v)
            assert abs(pdf.evaluate(v) - want) < 1e-12


@pytest.mark.parametrize("kind", KERNELS)
def test_density_integrates_to_one(kind):
    rng = np.random.default_rng(3)
    samples = rng.normal(-60, 6, size=200)
    pdf = fit(samples, KernelSpec(kind))
    grid = np.linspace(-150.0, 50.0, 20001)
    integral = simpson(pdf.evaluate(grid), x=grid)
    assert abs(integral - 1.0) < 1e-6


def test_vector_and_scalar_evaluate_agree():
    pdf = fit(np.array([-60.0, -62.0, -58.5]), KernelSpec())
    probes = np.array([-70.0, -60.0, -50.0])
    vec = evaluate(pdf, probes)
    assert vec.shape == (3,)
    for p, v in zip(probes, vec):
        assert evaluate(pdf, float(p)) == v


def test_fit_input_validation():
    with pytest.raises(NoSamplesError):
        fit(np.array([]), KernelSpec())
    with pytest.raises(ValueError):
        fit(np.array([-50.0, float("nan")]), KernelSpec())
    with pytest.raises(ValueError):
        KernelSpec("gaussian", bandwidth=0.0)
    with pytest.raises(ValueError):
        KernelSpec("box")


def test_bandwidth_controls_smoothness():
    samples = np.array([-60.0])
    narrow = fit(samples, KernelSpec(bandwidth=0.5))
    wide = fit(samples, KernelSpec(bandwidth=4.0))
    # mass concentrates at the sample for small h
    assert narrow.evaluate(-60.0) > wide.evaluate(-60.0)
    assert narrow.evaluate(-70.0) < wide.evaluate(-70.0)


def test_pooled_fit_spans_devices():
    db = make_synthetic_db()
    rec_samples = db.record(0).rssi_samples["ap1"]
    pdf = pooled_fit(db.record(0), "ap1", KernelSpec())
    n = sum(len(rows) for rows in rec_samples.values())
    assert pdf.samples.size == n
    with pytest.raises(NoSamplesError):
        pooled_fit(db.record(0), "ap_unknown", KernelSpec())


def test_table_densities_match_per_rp_pdfs():
    db = make_synthetic_db()
    table = fit_all_pdfs(db, KernelSpec())
    assert isinstance(table, PdfTable)
    for ap_id in db.env.ap_ids:
        dens = table.densities(ap_id, -55.0)
        assert dens.shape == (len(db),)
        for i, rp_id in enumerate(db.rp_ids):
            pdf = pooled_fit(db.record(rp_id), ap_id, KernelSpec())
            assert abs(dens[i] - pdf.evaluate(-55.0)) < 1e-13


def test_table_log_accumulate_floors_uncovered():
    db = make_synthetic_db()
    table = fit_all_pdfs(db, KernelSpec())
    out = np.zeros(len(db))
    table.log_accumulate("ap1", -55.0, 1e-12, out)
    dens = table.densities("ap1", -55.0)
    np.testing.assert_allclose(out, np.log(np.maximum(dens, 1e-12)),
                               rtol=0, atol=1e-12)


def test_rssi_pdf_is_immutable():
    pdf = fit(np.array([-60.0, -61.0]), KernelSpec())
    assert isinstance(pdf, RssiPdf)
    with pytest.raises(Exception):
        pdf.samples = np.zeros(2)
