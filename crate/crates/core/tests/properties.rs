use num_complex::Complex64;
use proptest::prelude::*;
use qns_core::estimation::{background_subtract, mae, reconstruct, ReconstructOptions};
use qns_core::filter::{fourier_segment_sum, FilterFunction, FilterModel, FrequencyGrid};
use qns_core::noise::{NoiseSynth, RealizedSpectra, SpectralDensity, SpectrumTable};
use qns_core::oracle::{oracle_records, BinnedSpectra};
use qns_core::plan::build_plan;
use qns_core::pulses::SwitchingFunction;
use qns_core::records::ReadoutModel;
use qns_core::simulator::StaticParams;
use qns_core::studies::{bin_average, slot_time, BenchmarkNoise};
use std::sync::OnceLock;

const T: f64 = 5e-6;
const M: u32 = 6;
const K: usize = 8;

fn switching() -> impl Strategy<Value = SwitchingFunction> {
    prop::collection::vec(0.001f64..0.999, 0..12).prop_map(|mut f| {
        f.sort_by(f64::total_cmp);
        f.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
        let mut b = vec![0.0];
        b.extend(f.iter().map(|x| x * T));
        b.push(T);
        let signs = (0..b.len() - 1).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        SwitchingFunction::new(b, signs).unwrap()
    })
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-9 * scale.max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn filter_conjugate_symmetry(y1 in switching(), y2 in switching(), w in 0.0f64..1e8) {
        let ff = FilterFunction::new(y1.clone(), y2.clone(), FilterModel::Continuous).unwrap();
        let (p, n) = (ff.eval(w), ff.eval(-w));
        let s = p.g11.max(p.g22).max(1e-24);
        prop_assert!(close(p.g11, n.g11, s) && close(p.g22, n.g22, s) && close(p.g1212, n.g1212, s));
        prop_assert!((p.g12 - n.g12.conj()).norm() <= 1e-9 * s);
        let swapped = FilterFunction::new(y2, y1, FilterModel::Continuous).unwrap().eval(w);
        prop_assert!((swapped.g12 - p.g12.conj()).norm() <= 1e-9 * s);
        // |G12|^2 = G11 G22 for a single pair of deterministic sequences.
        prop_assert!((p.g12.norm_sqr() - p.g11 * p.g22).abs() <= 1e-9 * s * s);
    }

    #[test]
    fn transform_matches_exponential_form(y in switching(), w in 1e5f64..1e8) {
        let direct: Complex64 = y
            .segments()
            .map(|(a, b, s)| s * (Complex64::from_polar(1.0, w * b) - Complex64::from_polar(1.0, w * a)))
            .sum::<Complex64>()
            / Complex64::new(0.0, w);
        let lib = fourier_segment_sum(&y, w);
        prop_assert!((lib - direct).norm() <= 1e-9 * T);
    }

    #[test]
    fn time_reversal_keeps_magnitude(y in switching(), w in 0.0f64..1e8) {
        let segs: Vec<_> = y.segments().collect();
        let mut b = vec![0.0];
        let mut signs = Vec::new();
        for &(a, _, s) in segs.iter().rev() {
            b.push(T - a);
            signs.push(s);
        }
        let r = SwitchingFunction::new(b, signs).unwrap();
        let (f, g) = (fourier_segment_sum(&y, w), fourier_segment_sum(&r, w));
        prop_assert!((f.norm() - g.norm()).abs() <= 1e-9 * T);
    }

    #[test]
    fn mae_of_constant_offset(v in prop::collection::vec(-5.0f64..5.0, 2..40), c in -3.0f64..3.0) {
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        let (err, _) = mae(&shifted, &v, 0..v.len()).unwrap();
        prop_assert!((err - c.abs()).abs() < 1e-12);
    }
}

/// Bin-averaged benchmark spectra on the small grid.
fn base_truth() -> &'static SpectrumTable {
    static TRUTH: OnceLock<SpectrumTable> = OnceLock::new();
    TRUTH.get_or_init(|| {
        let dt = slot_time(T, M);
        let model = BenchmarkNoise::default().model(T, dt).unwrap();
        bin_average(&RealizedSpectra::new(&model, dt).unwrap(), &FrequencyGrid::new(T, K).unwrap())
    })
}

/// Scales the self-spectra up and the cross-spectrum down, which keeps the
/// spectral matrix positive semidefinite.
fn perturbed(f: &[f64]) -> SpectrumTable {
    let mut t = base_truth().clone();
    for j in 0..K {
        t.s11[j] *= 1.0 + f[5 * j];
        t.s22[j] *= 1.0 + f[5 * j + 1];
        t.re_s12[j] *= 2.0 * f[5 * j + 2] - 1.0;
        t.im_s12[j] *= 2.0 * f[5 * j + 3] - 1.0;
        t.s1212[j] *= 0.5 + f[5 * j + 4];
    }
    t.im_s12[0] = 0.0;
    t
}

fn round_trip(truth: &SpectrumTable, statics: &StaticParams) -> qns_core::estimation::SpectrumEstimate {
    let dt = slot_time(T, M);
    let spectra = BinnedSpectra::new(FrequencyGrid::new(T, K).unwrap(), truth.clone()).unwrap();
    let plan = build_plan(K, M, dt, 1).unwrap();
    let fm = FilterModel::Sampled { dt };
    let records = oracle_records(&plan, &spectra, statics, fm, &ReadoutModel::ideal()).unwrap();
    reconstruct(&records, &plan, &ReconstructOptions { model: fm, ..Default::default() }).unwrap().0
}

fn max_rel(est: &SpectrumTable, truth: &SpectrumTable) -> f64 {
    let pairs: [(&[f64], &[f64]); 5] = [
        (&est.s11, &truth.s11),
        (&est.s22, &truth.s22),
        (&est.re_s12, &truth.re_s12),
        (&est.im_s12, &truth.im_s12),
        (&est.s1212, &truth.s1212),
    ];
    pairs
        .iter()
        .map(|(e, r)| {
            let scale = r.iter().fold(1e-300f64, |a, v| a.max(v.abs()));
            e.iter().zip(r.iter()).fold(0.0f64, |a, (x, y)| a.max((x - y).abs())) / scale
        })
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn oracle_round_trip_recovers_binned_spectra(f in prop::collection::vec(0.0f64..1.0, 5 * K)) {
        let truth = perturbed(&f);
        let est = round_trip(&truth, &BenchmarkNoise::default().statics(T));
        prop_assert!(max_rel(&est.spectra, &truth) <= 1e-6);
        prop_assert_eq!(est.spectra.im_s12[0], 0.0);
    }

    #[test]
    fn statics_do_not_leak_into_spectra(d1 in -1.2f64..1.2, d2 in -1.2f64..1.2, j in 0.2f64..2.8) {
        let statics = StaticParams { delta1: d1 / (2.0 * T), delta2: d2 / (2.0 * T), j: j / (2.0 * T) };
        let truth = base_truth();
        let est = round_trip(truth, &statics);
        prop_assert!(max_rel(&est.spectra, truth) <= 1e-6);
        let s = est.statics.unwrap();
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
        prop_assert!(rel(s.delta1, statics.delta1) < 1e-6 || (s.delta1 - statics.delta1).abs() * T < 1e-9);
        prop_assert!(rel(s.delta2, statics.delta2) < 1e-6 || (s.delta2 - statics.delta2).abs() * T < 1e-9);
        prop_assert!(rel(s.j, statics.j) < 1e-6);
    }
}

#[test]
fn background_subtraction_of_itself_is_zero() {
    let est = round_trip(base_truth(), &BenchmarkNoise::default().statics(T));
    let diff = background_subtract(&est, &est).unwrap();
    for col in [&diff.spectra.s11, &diff.spectra.s22, &diff.spectra.re_s12, &diff.spectra.im_s12, &diff.spectra.s1212] {
        assert!(col.iter().all(|&v| v == 0.0));
    }
    assert_eq!(diff.spectra.omega, est.spectra.omega);
}

// Averaged periodograms of the synthesized rates against the realized
// spectra, including the phase of the delayed shared component.
#[test]
fn synthesized_noise_matches_realized_spectra() {
    let dt = slot_time(T, M);
    let model = BenchmarkNoise::default().model(T, dt).unwrap();
    let synth = NoiseSynth::new(&model, dt).unwrap();
    let realized = RealizedSpectra::new(&model, dt).unwrap();
    let n = 1024;
    let total = n as f64 * dt;
    let n_real = 600;
    // Whole DFT harmonics, away from zero and Nyquist.
    let harmonics = [6usize, 10, 16, 24, 40];
    let mut acc = vec![[0.0f64; 3].map(|_| Complex64::default()); harmonics.len()];
    let mut acc1212 = vec![0.0f64; harmonics.len()];
    let mean = model.mean_rates();
    for r in 0..n_real {
        let z = synth.realize(n, 77, r as u64);
        for (h, &q) in harmonics.iter().enumerate() {
            let w = 2.0 * std::f64::consts::PI * q as f64 / total;
            let x: [Complex64; 3] = std::array::from_fn(|p| {
                z.phi[p]
                    .iter()
                    .enumerate()
                    .map(|(k, &phi)| (phi - mean[p] * dt) * Complex64::from_polar(1.0, w * k as f64 * dt))
                    .sum()
            });
            acc[h][0] += x[0].norm_sqr();
            acc[h][1] += x[1].norm_sqr();
            acc[h][2] += x[0].conj() * x[1];
            acc1212[h] += x[2].norm_sqr();
        }
    }
    for (h, &q) in harmonics.iter().enumerate() {
        let w = 2.0 * std::f64::consts::PI * q as f64 / total;
        let norm = 1.0 / (n_real as f64 * total);
        let p = realized.at(w);
        let s11 = acc[h][0].re * norm;
        let s22 = acc[h][1].re * norm;
        let s12 = acc[h][2] * norm;
        let s1212 = acc1212[h] * norm;
        // Sampling error of an average of 600 exponential variates is ~4%.
        assert!((s11 / p.s11 - 1.0).abs() < 0.2, "s11 at harmonic {q}: {s11} vs {}", p.s11);
        assert!((s22 / p.s22 - 1.0).abs() < 0.2, "s22 at harmonic {q}: {s22} vs {}", p.s22);
        assert!((s1212 / p.s1212 - 1.0).abs() < 0.2, "s1212 at harmonic {q}: {s1212} vs {}", p.s1212);
        let scale = (p.s11 * p.s22).sqrt();
        assert!((s12 - p.s12).norm() < 0.2 * scale, "s12 at harmonic {q}: {s12} vs {}", p.s12);
    }
}
