use approx::assert_relative_eq;
use mpet_core::model::{g_matrix, g_matrix_checks, g_matrix_closed_form, lemma3_det, lemma4_det};
use mpet_core::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn one_network() -> MpetParameters {
    MpetParameters::from_toml_str(
        "n = 1\nmu = 1.0\nlambda = 1.0\nrho_s = 1.0\nphi = 0.5\nrho = 1.0\nrho_m = 2.0\nk = 1.0\nalpha_tilde = 1.0\nc_p = 1.0\ntau = 0.2\n",
    )
    .unwrap()
}

#[test]
fn hand_evaluated_single_network() {
    let d = derive_coefficients(&one_network()).unwrap();
    // γ₁ = −((1 − 0.5·2) − 0.1·0.5/1)
    assert_relative_eq!(d.gamma[0], 0.05, max_relative = 1e-14);
    assert_relative_eq!(d.gamma_u, 1.525, max_relative = 1e-14);
    assert_relative_eq!(d.gamma_v[0], 3.1, max_relative = 1e-14);
    assert_relative_eq!(d.alpha[0], 0.5, max_relative = 1e-14);
}

#[test]
fn gamma_vanishes_without_drag_or_density_gap() {
    let mut p = one_network();
    p.tau = 1e-300;
    p.rho_m = vec![p.rho[0] / p.phi[0]];
    let d = derive_coefficients(&p).unwrap();
    assert!(d.gamma[0].abs() < 1e-250);
}

#[test]
fn transfer_coefficients() {
    let mut p = MpetParameters::default_for(2);
    p.tau = 0.5;
    p.c_p = vec![0.0, 0.0];
    let b = 8.0 / p.tau.powi(3);
    p.beta_tilde = vec![vec![0.0, b], vec![b, 0.0]];
    let d = derive_coefficients(&p).unwrap();
    assert_relative_eq!(d.beta[0][1], 1.0, max_relative = 1e-14);
    assert_relative_eq!(d.beta[0][0], 1.0, max_relative = 1e-14);
}

#[test]
fn norm_weight_examples() {
    let mut p = MpetParameters::default_for(2);
    p.c_p = vec![0.0, 0.0];
    let w = build_norm_weights(&p, &derive_coefficients(&p).unwrap()).unwrap();
    assert_eq!(w.lambda1, DMatrix::zeros(2, 2));

    let mut p = MpetParameters::default_for(1);
    p.alpha_tilde = p.phi.clone();
    let w = build_norm_weights(&p, &derive_coefficients(&p).unwrap()).unwrap();
    assert_eq!(w.lambda3[(0, 0)], 0.0);

    let mut p = MpetParameters::default_for(2);
    p.tau = 2.0;
    p.c_p = vec![0.0, 0.0];
    p.beta_tilde = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
    let w = build_norm_weights(&p, &derive_coefficients(&p).unwrap()).unwrap();
    assert_eq!(w.lambda1, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
}

#[test]
fn degenerate_lambda_is_reported() {
    // c_p = 0, no transfer, α = 0 and a huge γ_v in one network only
    let mut p = MpetParameters::default_for(2);
    p.c_p = vec![0.0, 0.0];
    p.alpha_tilde = p.phi.clone();
    p.k = vec![1e-300, 1.0];
    let e = build_norm_weights(&p, &derive_coefficients(&p).unwrap()).unwrap_err();
    assert!(e.to_string().contains("singular"), "{e}");
}

#[test]
fn lemma_examples() {
    assert_eq!(lemma3_det(1.0, &[9.0, -2.0, 4.0]), -4.0);
    assert_eq!(lemma3_det(3.0, &[1.0, 0.0]), 0.0);
    assert_eq!(lemma3_det(5.0, &[7.0]), -7.0);
    assert_eq!(lemma4_det(3.0, 2.0, &[1.0]), 5.0);
    assert_eq!(lemma4_det(2.0, 1.0, &[1.0, 1.0]), 0.0);
    assert_eq!(lemma4_det(3.0, 2.0, &[0.0, 0.0, 0.0]), 2f64.powi(3) * 3.0);
}

#[test]
fn toml_errors_name_the_problem() {
    let base = "n = 2\nmu = 1.0\nlambda = 1.0\nrho_s = 1.0\nphi = 0.2\nrho = 1.0\nrho_m = 5.0\nk = 1.0\nalpha_tilde = 1.0\nc_p = 1.0\ntau = 0.1\n";
    let e = MpetParameters::from_toml_str(&base.replace("phi = 0.2", "phi = [0.1, 0.2, 0.3]")).unwrap_err().to_string();
    assert!(e.contains("phi"), "{e}");
    let e = MpetParameters::from_toml_str(&format!("{base}bogus = 1\n")).unwrap_err().to_string();
    assert!(e.contains("bogus"), "{e}");
    let e = MpetParameters::from_toml_str("n = 2\n").unwrap_err().to_string();
    assert!(e.contains("mu"), "{e}");
    let asym = format!("{base}beta_tilde = [[0.0, 1.0], [2.0, 0.0]]\n");
    assert!(MpetParameters::from_toml_str(&asym).unwrap_err().to_string().contains("symmetric"));
    let ok = format!("{base}beta_tilde = 3.0\n");
    let p = MpetParameters::from_toml_str(&ok).unwrap();
    assert_eq!(p.beta_tilde, vec![vec![0.0, 3.0], vec![3.0, 0.0]]);
    assert_eq!(p.t_final, p.tau);
}

#[test]
fn g_matrix_known_case() {
    let d = derive_coefficients(&one_network()).unwrap();
    let (g, b, c) = g_matrix(&d);
    assert_eq!(g.nrows(), 2);
    let cf = g_matrix_closed_form(c, b[0] * b[0], 1);
    let mut e: Vec<f64> = g.symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(f64::total_cmp);
    for (x, y) in e.iter().zip(&cf) {
        assert_relative_eq!(x, y, epsilon = 1e-14);
    }
}

fn admissible() -> impl Strategy<Value = MpetParameters> {
    (any::<u64>(), 1usize..=6).prop_map(|(seed, n)| MpetParameters::random_admissible(&mut ChaCha8Rng::seed_from_u64(seed), n))
}

proptest! {
    #[test]
    fn derived_invariants(p in admissible()) {
        let d = derive_coefficients(&p).unwrap();
        for i in 0..p.n {
            prop_assert!(d.gamma[i] >= 0.0);
            prop_assert!(d.gamma_v[i] > 1.0);
            let alt = p.rho_m[i] + p.tau / (2.0 * p.k[i]) + 1.0;
            prop_assert!((d.gamma_v[i] - alt).abs() <= 1e-12 * alt);
        }
        prop_assert!(d.gamma_u >= 1.0);
        prop_assert!(d.gamma_max >= d.gamma_u);
    }

    #[test]
    fn norm_weights_are_definite(p in admissible()) {
        let d = derive_coefficients(&p).unwrap();
        let Ok(w) = build_norm_weights(&p, &d) else { return Ok(()) };
        let lam = w.lambda.clone().symmetric_eigenvalues();
        prop_assert!(lam.min() > 0.0);
        let l1 = w.lambda1.clone().symmetric_eigenvalues();
        prop_assert!(l1.min() >= -1e-12 * l1.amax().max(1.0));
        let uv = w.lambda_uv.clone().symmetric_eigenvalues();
        prop_assert!(uv.min() >= -1e-12 * uv.amax());
        // transfer terms cancel in the row sums of Λ₁
        for i in 0..p.n {
            let s: f64 = (0..p.n).map(|j| w.lambda1[(i, j)]).sum();
            prop_assert!((s - p.c_p[i]).abs() <= 1e-10 * (1.0 + w.lambda1.amax()));
        }
    }

    #[test]
    fn g_matrix_bounds_hold(p in admissible()) {
        let d = derive_coefficients(&p).unwrap();
        let r = g_matrix_checks(&p, &d).unwrap();
        prop_assert!(r.lambda_max <= 2.0 + 1e-12);
        prop_assert!(r.sum_b2 <= 1.0 + 1e-12);
    }

    #[test]
    fn lemma_dets_match_lu(a in -3.0f64..3.0, c in -3.0f64..3.0, b in prop::collection::vec(-3.0f64..3.0, 1..8)) {
        let n = b.len();
        let mut m = DMatrix::identity(n + 1, n + 1) * a;
        m[(0, 0)] = c;
        for i in 0..n {
            m[(0, i + 1)] = -b[i];
            m[(i + 1, 0)] = -b[i];
        }
        let scale = a.abs().powi(n as i32 - 1) * ((a * c).abs() + b.iter().map(|x| x * x).sum::<f64>()) + 1e-300;
        prop_assert!((lemma4_det(c, a, &b) - m.lu().determinant()).abs() <= 1e-10 * scale);
    }
}
