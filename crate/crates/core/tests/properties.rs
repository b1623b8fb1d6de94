use blowup_core::cpplus::{f_m, solve_cpplus};
use blowup_core::diagnostics::{decay_fit, sigma_closed_form, sigma_sequence};
use blowup_core::model::{equilibrium_amplitude, in_omega, v_unchecked};
use blowup_core::pde::{linspace, reconstruct};
use blowup_core::{integrate, MethodTag, Params, PhasePoint, SolutionTrace};
use proptest::prelude::*;

fn short_run(p: f64, n: u32, frac: f64, eta_max: f64) -> Params {
    let alpha = frac * equilibrium_amplitude(p).unwrap();
    Params::new(p, n, alpha)
        .unwrap()
        .with_eta_max(eta_max)
        .unwrap()
}

/// `w = η^{-k} cos η` sampled with exact derivatives on `[1, 100]`.
fn planted(k: f64) -> SolutionTrace {
    let count = 4000;
    let etas: Vec<f64> = (0..=count).map(|i| 1.0 + 99.0 * i as f64 / count as f64).collect();
    let w = |x: f64| x.powf(-k) * x.cos();
    let wp = |x: f64| -k * x.powf(-k - 1.0) * x.cos() - x.powf(-k) * x.sin();
    let wpp = |x: f64| {
        k * (k + 1.0) * x.powf(-k - 2.0) * x.cos() + 2.0 * k * x.powf(-k - 1.0) * x.sin()
            - x.powf(-k) * x.cos()
    };
    let params = Params::new(0.5, 3, 0.2).unwrap().with_eta_max(100.0).unwrap();
    SolutionTrace::from_samples(
        params,
        etas.clone(),
        etas.iter().map(|&x| w(x)).collect(),
        etas.iter().map(|&x| wp(x)).collect(),
        etas.iter().map(|&x| wpp(x)).collect(),
        MethodTag::Constant,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn odd_extension_is_negation(p in 0.2f64..0.8, n in 1u32..4, frac in 0.1f64..0.9) {
        let params = short_run(p, n, frac, 8.0);
        let plus = integrate(&params).unwrap();
        let minus = integrate(&params.mirrored()).unwrap();
        prop_assert_eq!(plus.len(), minus.len());
        let neg = plus.negated();
        for i in 0..plus.len() {
            prop_assert_eq!(neg.etas[i], minus.etas[i]);
            prop_assert!((neg.ws[i] - minus.ws[i]).abs() <= params.abs_tol);
            prop_assert!((neg.wps[i] - minus.wps[i]).abs() <= params.abs_tol);
        }
    }

    #[test]
    fn trajectory_stays_in_level_set(p in 0.2f64..0.8, n in 1u32..4, frac in 0.1f64..0.9) {
        let params = short_run(p, n, frac, 10.0);
        let trace = integrate(&params).unwrap();
        let c = v_unchecked(params.alpha, 0.0, p);
        for i in 1..trace.len() {
            let pt = PhasePoint::new(trace.ws[i], trace.wps[i]);
            prop_assert!(in_omega(pt, c, p).unwrap(), "left the level set at η = {}", trace.etas[i]);
        }
    }

    #[test]
    fn reconstruction_is_odd(frac in 0.1f64..0.9) {
        let params = short_run(0.5, 3, frac, 10.0);
        let trace = integrate(&params).unwrap();
        let (r, t) = (linspace(0.0, 4.0, 21), linspace(0.0, 1.0, 11));
        let a = reconstruct(&trace, &r, &t, 1.0).unwrap();
        let b = reconstruct(&trace.negated(), &r, &t, 1.0).unwrap();
        for (ra, rb) in a.u.iter().zip(&b.u) {
            for (x, y) in ra.iter().zip(rb) {
                prop_assert_eq!(*x, -*y);
            }
        }
    }
}

proptest! {
    #[test]
    fn sigma_matches_closed_form_and_limit(p in 0.05f64..0.95, m in 1usize..=40) {
        let seq = sigma_sequence(p, m).unwrap();
        let limit = 2.0 * (1.0 + p) / (1.0 - p);
        for (k, &s) in seq.iter().enumerate() {
            prop_assert!((s - sigma_closed_form(p, k + 1)).abs() <= 1e-12 * limit);
            prop_assert!(s <= limit * (1.0 + 1e-14));
        }
    }

    #[test]
    fn decay_fit_recovers_planted_exponent(k in 0.5f64..8.0) {
        let fit = decay_fit(&planted(k), (15.0, 100.0)).unwrap();
        prop_assert!((fit.exponent - k).abs() <= 0.02 * k, "planted {k}, fitted {}", fit.exponent);
    }

    #[test]
    fn regularised_reaction_is_monotone_and_continuous(
        u in -1.0f64..2.0, p in 0.05f64..0.95, m in 1u32..64
    ) {
        let h = 1e-9;
        prop_assert!(f_m(u + h, m, p) >= f_m(u, m, p));
        prop_assert!((f_m(u + h, m, p) - f_m(u, m, p)).abs() <= (m as f64).powf(1.0 - p) * h * 1.01);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn regularised_runs_respect_sign_and_supersolution(
        g in 0.05f64..2.0, p in 0.2f64..0.8, m in 1u32..9
    ) {
        let r = linspace(0.0, 8.0, 81);
        let ev = solve_cpplus(m, p, 3, 1.0, g, 0.5, &r, 40).unwrap();
        prop_assert!(ev.min_value() >= -1e-12);
        prop_assert!(ev.bound_report(1e-12).pass);
    }
}

#[test]
fn tolerance_refinement_is_consistent() {
    let base = Params::new(0.5, 3, 0.2).unwrap().with_eta_max(12.0).unwrap();
    let at = |tol: f64| {
        let params = base.with_tolerances(tol, tol * 1e-2).unwrap();
        integrate(&params).unwrap().w(12.0).unwrap()
    };
    let (coarse, fine, reference) = (at(1e-7), at(5e-8), at(1e-11));
    let fine_error = (fine - reference).abs().max(1e-10);
    assert!(
        (coarse - fine).abs() < 16.0 * fine_error,
        "change {} vs fine error {}",
        (coarse - fine).abs(),
        fine_error
    );
}
