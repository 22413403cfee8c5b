mod common;

use common::*;
use hybrid_precoding::channel::{generate_channel, ChannelStats, SystemConfig};
use hybrid_precoding::codebook::beamsteering_vcb;
use hybrid_precoding::grassmann::{
    avg_chordal, avg_chordal_from_projector_sum, chordal_sq, complement_projector, generalized_chordal_sq,
    karcher_centroid, projector_sum,
};
use hybrid_precoding::greedy::{approx_gs_hp, ApproxOptions};
use hybrid_precoding::linalg::{complex_gaussian, frob_sq, random_semi_unitary, CMat};
use hybrid_precoding::lloyd::{
    assign, baseband_training_set, codebook_distortion, init_codebook, member_distance, partition, recenter,
    rf_codebook_distortion, train_baseband_codebook, train_rf_codebook, train_rf_vector_codebook,
    training_channels, LloydConfig, TrainingMember, TrainingSet,
};
use hybrid_precoding::precoder::{
    effective_svd, equivalent_baseband_split, exhaustive_rf_search, hybrid_mi_for_rf, mutual_information,
    optimal_baseband, orthonormal_factor, waterfill, PowerConstraint,
};

const MODES: [PowerConstraint; 3] = [
    PowerConstraint::Total,
    PowerConstraint::PerSubcarrierTotal,
    PowerConstraint::Unitary,
];

fn small_sys() -> SystemConfig {
    SystemConfig {
        n_bs: 8,
        n_ms: 4,
        n_rf: 3,
        n_s: 2,
        k_sub: 4,
        cp_len: 2,
        ..Default::default()
    }
}

fn random_member(g: &mut impl rand::Rng, n: usize, r: usize, subs: usize) -> TrainingMember {
    let bases: Vec<CMat> = (0..subs).map(|_| random_semi_unitary(g, n, r)).collect();
    TrainingMember::new(bases, vec![vec![1.0; r]; subs]).unwrap()
}

fn random_training(seed: u64, n: usize, r: usize, members: usize, subs: usize) -> TrainingSet {
    let mut g = rng(seed);
    TrainingSet::new((0..members).map(|_| random_member(&mut g, n, r, subs)).collect()).unwrap()
}

/// Mean distance from `x` to the member's subspaces, one pair at a time.
fn naive_member_distance(x: &CMat, m: &TrainingMember) -> f64 {
    let total: f64 = m
        .bases
        .iter()
        .map(|y| {
            if y.ncols() == x.ncols() {
                chordal_sq(x, y).unwrap()
            } else {
                generalized_chordal_sq(x, y).unwrap()
            }
        })
        .sum();
    total / m.bases.len() as f64
}

#[test]
fn effective_svd_matches_explicit_product() {
    let mut g = rng(11);
    for _ in 0..20 {
        let ch = gaussian_channel(&mut g, 1, 4, 8);
        let f = unit_modulus(&mut g, 8, 3);
        let eff = effective_svd(&ch.svds()[0], &f).unwrap();
        let q = gram_schmidt(&f);
        let reference = singular_values(&(ch.at(0) * &q));
        for (a, b) in eff.sigma_bar.iter().zip(&reference) {
            assert!(
                (a - b).abs() < 1e-9 * (1.0 + b),
                "{:?} vs {reference:?}",
                eff.sigma_bar
            );
        }
    }
}

#[test]
fn waterfill_matches_simplex_grid() {
    let gains = [4.0, 0.01];
    let rho = 0.1;
    let wf = waterfill(&[gains.to_vec()], rho, 2, PowerConstraint::Total).unwrap();
    let objective = |p0: f64| {
        let p1 = 2.0 - p0;
        (1.0 + rho / 2.0 * gains[0] * p0).ln() + (1.0 + rho / 2.0 * gains[1] * p1).ln()
    };
    let steps = 20_000;
    let best = (0..=steps)
        .map(|i| 2.0 * i as f64 / steps as f64)
        .max_by(|a, b| objective(*a).total_cmp(&objective(*b)))
        .unwrap();
    assert!((wf.power[0][0] - best).abs() <= 1e-4, "{:?} vs {best}", wf.power);
    assert!((wf.power[0][1] - (2.0 - best)).abs() <= 1e-4);
    assert!(objective(wf.power[0][0]) >= objective(best) - 1e-12);
}

#[test]
fn waterfill_matches_bisection_on_random_gains() {
    let mut g = rng(5);
    for _ in 0..50 {
        let k = 3;
        let gains: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                (0..2)
                    .map(|_| rand::Rng::random_range(&mut g, 0.0..5.0))
                    .collect()
            })
            .collect();
        let rho = 10f64.powf(rand::Rng::random_range(&mut g, -1.5..1.5));
        let wf = waterfill(&gains, rho, 2, PowerConstraint::Total).unwrap();
        let flat: Vec<f64> = gains.iter().flatten().copied().collect();
        let reference = waterfill_bisection(&flat, rho / 2.0, (k * 2) as f64);
        for (a, b) in wf.power.iter().flatten().zip(&reference) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }
}

#[test]
fn mutual_information_matches_determinant() {
    let mut g = rng(3);
    for mode in MODES {
        for _ in 0..10 {
            let ch = gaussian_channel(&mut g, 3, 4, 4);
            let f = unit_modulus(&mut g, 4, 2);
            let p = optimal_baseband(&f, &ch, 3.0, 2, mode).unwrap();
            let composite: Vec<CMat> = (0..ch.k()).map(|k| p.composite(k)).collect();
            let mi = mutual_information(&ch, &p, 3.0);
            let reference = mi_by_det(&ch, &composite, 3.0);
            assert!((mi - reference).abs() < 1e-9, "{mode:?}: {mi} vs {reference}");
        }
    }
}

#[test]
fn unitary_hybrid_mi_matches_gram_schmidt_oracle() {
    let mut g = rng(4);
    for _ in 0..20 {
        let ch = gaussian_channel(&mut g, 3, 4, 8);
        let f = unit_modulus(&mut g, 8, 3);
        let mi = hybrid_mi_for_rf(&f, &ch, 2.0, 2, PowerConstraint::Unitary).unwrap();
        let reference = unitary_hybrid_mi(&f, &ch, 2.0, 2);
        assert!((mi - reference).abs() < 1e-9, "{mi} vs {reference}");
    }
}

#[test]
fn exhaustive_search_matches_naive_loop() {
    let mut g = rng(8);
    for mode in MODES {
        let ch = gaussian_channel(&mut g, 4, 4, 8);
        let cb: Vec<CMat> = (0..8).map(|_| unit_modulus(&mut g, 8, 2)).collect();
        let (idx, mi) = exhaustive_rf_search(&cb, &ch, 1.5, 2, mode).unwrap();
        let mut best = (0, f64::NEG_INFINITY);
        for (i, f) in cb.iter().enumerate() {
            let p = optimal_baseband(f, &ch, 1.5, 2, mode).unwrap();
            let composite: Vec<CMat> = (0..ch.k()).map(|k| p.composite(k)).collect();
            let v = mi_by_det(&ch, &composite, 1.5);
            if v > best.1 {
                best = (i, v);
            }
        }
        assert_eq!(idx, best.0, "{mode:?}");
        assert!((mi - best.1).abs() < 1e-9);
    }
}

#[test]
fn equivalent_split_preserves_composite_norm() {
    let mut g = rng(9);
    for _ in 0..20 {
        let f = unit_modulus(&mut g, 8, 3);
        let bb: Vec<CMat> = (0..4).map(|_| complex_gaussian(&mut g, 3, 2, 1.0)).collect();
        let eq = equivalent_baseband_split(&f, &bb).unwrap();
        for (e, b) in eq.iter().zip(&bb) {
            let composite = &f * b;
            assert!((frob_sq(e) - frob_sq(&composite)).abs() < 1e-10 * (1.0 + frob_sq(&composite)));
        }
    }
}

#[test]
fn chordal_matches_projector_difference() {
    let mut g = rng(12);
    for _ in 0..50 {
        let x = random_semi_unitary(&mut g, 7, 3);
        let y = random_semi_unitary(&mut g, 7, 3);
        let diff = &x * x.adjoint() - &y * y.adjoint();
        let reference = 0.5 * frob_sq(&diff);
        assert!((chordal_sq(&x, &y).unwrap() - reference).abs() < 1e-10);
    }
}

#[test]
fn avg_chordal_paths_match_loop() {
    let mut g = rng(13);
    for generalized in [false, true] {
        let x = random_semi_unitary(&mut g, 6, if generalized { 3 } else { 2 });
        let ys: Vec<CMat> = (0..9).map(|_| random_semi_unitary(&mut g, 6, 2)).collect();
        let mut total = 0.0;
        for y in &ys {
            total += if generalized {
                generalized_chordal_sq(&x, y).unwrap()
            } else {
                chordal_sq(&x, y).unwrap()
            };
        }
        let naive = total / ys.len() as f64;
        assert!((avg_chordal(&x, &ys, generalized).unwrap() - naive).abs() < 1e-12);
        let psum = projector_sum(&ys).unwrap();
        assert!((avg_chordal_from_projector_sum(&x, &psum, ys.len(), 2) - naive).abs() < 1e-10);
    }
}

#[test]
fn centroid_beats_random_candidates() {
    let mut g = rng(14);
    let ys: Vec<CMat> = (0..3).map(|_| random_semi_unitary(&mut g, 6, 2)).collect();
    let c = karcher_centroid(&ys, 2).unwrap();
    let d = avg_chordal(&c, &ys, false).unwrap();
    for _ in 0..10_000 {
        let x = random_semi_unitary(&mut g, 6, 2);
        assert!(d <= avg_chordal(&x, &ys, false).unwrap() + 1e-6);
    }
}

#[test]
fn complement_projector_spectrum() {
    let mut g = rng(15);
    for m in 1..5 {
        let f = complex_gaussian(&mut g, 6, m, 1.0);
        let p = complement_projector(&f).unwrap();
        let ev = hermitian_eigs(&p);
        for (i, e) in ev.iter().enumerate() {
            let expected = if i < 6 - m { 1.0 } else { 0.0 };
            assert!((e - expected).abs() < 1e-9, "{ev:?}");
        }
    }
}

#[test]
fn assignment_matches_double_loop() {
    let training = random_training(16, 6, 2, 40, 3);
    let mut g = rng(17);
    let cb: Vec<CMat> = (0..5).map(|_| random_semi_unitary(&mut g, 6, 2)).collect();
    let fast = assign(&cb, &training);
    let mut cells = vec![Vec::new(); cb.len()];
    for (m, member) in training.members.iter().enumerate() {
        let mut best = (0, f64::INFINITY);
        for (i, x) in cb.iter().enumerate() {
            let d = naive_member_distance(x, member);
            if d < best.1 {
                best = (i, d);
            }
        }
        assert_eq!(fast[m].0, best.0);
        assert!((fast[m].1 - best.1).abs() < 1e-10);
        assert!((member_distance(&cb[best.0], member, 2) - best.1).abs() < 1e-10);
        cells[best.0].push(m);
    }
    assert_eq!(partition(&cb, &training), cells);
}

#[test]
fn codebook_distortion_matches_loop() {
    let training = random_training(18, 6, 2, 30, 2);
    let mut g = rng(19);
    let cb: Vec<CMat> = (0..4).map(|_| random_semi_unitary(&mut g, 6, 2)).collect();
    let naive: f64 = training
        .members
        .iter()
        .map(|m| {
            cb.iter()
                .map(|x| naive_member_distance(x, m))
                .fold(f64::INFINITY, f64::min)
        })
        .sum::<f64>()
        / training.len() as f64;
    assert!((codebook_distortion(&cb, &training) - naive).abs() < 1e-10);
}

#[test]
fn recentered_codeword_captures_top_eigenvalues() {
    let training = random_training(20, 6, 2, 12, 2);
    let mut g = rng(21);
    let cb: Vec<CMat> = (0..3).map(|_| random_semi_unitary(&mut g, 6, 2)).collect();
    let cells = partition(&cb, &training);
    let dist: Vec<f64> = assign(&cb, &training).into_iter().map(|(_, d)| d).collect();
    let centers = recenter(&cells, &training, 2, &dist).unwrap();
    for (cell, x) in cells.iter().zip(&centers) {
        if cell.is_empty() {
            continue;
        }
        let mut psum = CMat::zeros(6, 6);
        for &m in cell {
            psum += training.members[m].projector_sum();
        }
        let ky_fan: f64 = hermitian_eigs(&psum).into_iter().take(2).sum();
        let captured = (x.adjoint() * &psum * x).trace().re;
        assert!(
            (captured - ky_fan).abs() < 1e-9 * (1.0 + ky_fan),
            "{captured} vs {ky_fan}"
        );
        assert!(orthonormality_error(x) < 1e-10);
    }
}

#[test]
fn trained_baseband_beats_random_codebook() {
    let sys = small_sys();
    let stats = ChannelStats::default();
    let cfg = LloydConfig {
        n_cb: 8,
        max_iters: 10,
        tol: 1e-6,
    };
    let channels = training_channels(&sys, &stats, 60, 31).unwrap();
    let rf_training = TrainingSet::from_channels(&channels, sys.n_s).unwrap();
    let (rf, _) = train_rf_codebook(&cfg, 6, sys.n_rf, &rf_training, &mut rng(1)).unwrap();
    let bb_training = baseband_training_set(&rf, &channels, sys.n_s, 1.0).unwrap();
    for seed in 0..4 {
        let random = init_codebook(4, sys.n_rf, sys.n_s, &mut rng(100 + seed)).unwrap();
        let (trained, _) = train_baseband_codebook(
            &LloydConfig { n_cb: 4, ..cfg },
            &bb_training,
            &mut rng(100 + seed),
        )
        .unwrap();
        let a = codebook_distortion(&trained.codewords, &bb_training);
        let b = codebook_distortion(&random, &bb_training);
        assert!(a <= b + 1e-12, "seed {seed}: trained {a} vs random {b}");
    }
}

/// Held-out comparison at codebook sizes up to the antenna count.
#[test]
fn lloyd_vectors_beat_beamsteering() {
    let sys = SystemConfig {
        n_bs: 16,
        n_ms: 4,
        n_rf: 2,
        n_s: 1,
        k_sub: 8,
        cp_len: 2,
        ..Default::default()
    };
    let stats = ChannelStats::default();
    let held_out = TrainingSet::from_channels(&training_channels(&sys, &stats, 500, 42).unwrap(), 1).unwrap();
    for seed in [41, 51] {
        let train = training_channels(&sys, &stats, 1000, seed).unwrap();
        for n_cb in [4, 8] {
            let cfg = LloydConfig {
                n_cb,
                max_iters: 50,
                tol: 1e-6,
            };
            let (lloyd, _) = train_rf_vector_codebook(&cfg, 6, &train, &mut rng(seed)).unwrap();
            let beams = beamsteering_vcb(sys.n_bs, n_cb, 0.5, 6).unwrap();
            let a = rf_codebook_distortion(&lloyd, &held_out).unwrap();
            let b = rf_codebook_distortion(&beams, &held_out).unwrap();
            assert!(a < b, "seed {seed}, size {n_cb}: lloyd {a} vs beamsteering {b}");
        }
    }
}

#[test]
fn orthonormal_factor_spans_rf_columns() {
    let mut g = rng(22);
    let f = unit_modulus(&mut g, 8, 3);
    let q = orthonormal_factor(&f).unwrap();
    let reference = gram_schmidt(&f);
    let pq = &q * q.adjoint();
    let pr = &reference * reference.adjoint();
    assert!((pq - pr).norm() < 1e-10);
    assert!(((&q * q.adjoint() * &f) - &f).norm() < 1e-9);
}

/// All 3-subsets of a 64-vector beamsteering codebook on desk-scale channels.
/// Takes several minutes on one core.
#[test]
#[ignore]
fn approx_greedy_close_to_exhaustive_subsets() {
    let sys = SystemConfig {
        n_bs: 32,
        n_ms: 16,
        n_rf: 3,
        n_s: 3,
        k_sub: 64,
        cp_len: 16,
        ..Default::default()
    };
    let stats = ChannelStats::default();
    let vcb = beamsteering_vcb(32, 64, 0.5, 6).unwrap().stacked();
    let mut subsets = Vec::new();
    for a in 0..64 {
        for b in a + 1..64 {
            for c in b + 1..64 {
                subsets.push(columns(&vcb, &[a, b, c]));
            }
        }
    }
    let rho = 1.0;
    let (mut approx, mut exhaustive) = (0.0, 0.0);
    let n = 50;
    for i in 0..n {
        let ch = generate_channel(&sys, &stats, 7, i).unwrap();
        let (p, _) = approx_gs_hp(&vcb, &ch, 3, 3, rho, ApproxOptions::default()).unwrap();
        approx += mutual_information(&ch, &p, rho);
        exhaustive += exhaustive_rf_search(&subsets, &ch, rho, 3, PowerConstraint::Unitary)
            .unwrap()
            .1;
    }
    let (approx, exhaustive) = (approx / n as f64, exhaustive / n as f64);
    assert!(
        approx >= 0.95 * exhaustive,
        "approx {approx} vs exhaustive {exhaustive}"
    );
}
