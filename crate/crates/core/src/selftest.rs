//! Embedded fixture suite run by `fdx selftest`. Each check compares the
//! production code path against a hand-verified fixture or the brute-force
//! oracle on seeded random instances.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::common::{upper_quantile, AnalysisConfig, StatMatrix};
use crate::fdx_seq::sequential_exact;
use crate::fdx_single::{s_g_grid, single_step, single_step_pvalues};
use crate::maxt::{maxt_sequential, maxt_single};
use crate::oracle;
use crate::report::{v_bound, zoom_table};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = fn() -> Result<(), String>;

const CHECKS: &[(&str, Check)] = &[
    ("sign_flip_fixture_six", sign_flip_six),
    ("sign_flip_fixture_seven", sign_flip_seven),
    ("quantile_vs_brute_force", quantile_vs_brute),
    ("grid_vs_interval_scan", grid_vs_scan),
    ("gamma_zero_single_is_maxt", gamma_zero_single),
    ("gamma_zero_sequential_is_maxt", gamma_zero_sequential),
    ("exact_sequential_vs_exhaustive", sequential_vs_exhaustive),
    ("pvalue_route_duality", pvalue_duality),
    ("zoom_bounds", zoom_bounds),
];

pub fn run_all() -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .map(|&(name, f)| match f() {
            Ok(()) => CheckOutcome { name, passed: true, detail: String::new() },
            Err(detail) => CheckOutcome { name, passed: false, detail },
        })
        .collect()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn sign_flip_matrix(x: &[f64]) -> StatMatrix {
    StatMatrix::from_rows(vec![x.to_vec(), x.iter().map(|v| -v).collect()]).expect("valid fixture")
}

fn fixture_rejections(x: &[f64]) -> Result<Vec<usize>, String> {
    let cfg = AnalysisConfig::new(0.5, 0.5).map_err(|e| e.to_string())?;
    let r = single_step(&sign_flip_matrix(x), &cfg).map_err(|e| e.to_string())?;
    Ok(r.rejections.indices.iter().map(|i| i + 1).collect())
}

fn sign_flip_six() -> Result<(), String> {
    let got = fixture_rejections(&[1.0, 2.0, 3.0, 4.0, -5.0, 6.0])?;
    ensure(got == [6], || format!("rejected {got:?}, expected [6]"))
}

fn sign_flip_seven() -> Result<(), String> {
    let got = fixture_rejections(&[1.0, 2.0, 3.0, 4.0, -5.0, 6.0, 7.0])?;
    ensure(got == [1, 2, 3, 4, 6, 7], || format!("rejected {got:?}, expected [1, 2, 3, 4, 6, 7]"))
}

fn random_matrix(key: u64, d: usize, m: usize) -> StatMatrix {
    let mut r = rng::stream(0x5e1f, &[key]);
    let rows = (0..d).map(|_| (0..m).map(|_| r.sample::<f64, _>(StandardNormal)).collect()).collect();
    StatMatrix::from_rows(rows).expect("finite draws")
}

fn random_pvalues(key: u64, d: usize, m: usize) -> StatMatrix {
    let mut r = rng::stream(0x9a1, &[key]);
    let rows = (0..d).map(|_| (0..m).map(|_| 1.0 - r.random::<f64>()).collect()).collect();
    StatMatrix::from_rows(rows).expect("finite draws")
}

const GAMMAS: [f64; 4] = [0.0, 0.1, 0.25, 0.5];

fn quantile_vs_brute() -> Result<(), String> {
    for key in 0..50 {
        let values = random_matrix(key, 1, 3 + key as usize % 17).observed().to_vec();
        for alpha in [0.05, 0.1, 0.3, 0.5] {
            let got = upper_quantile(&values, alpha).map_err(|e| e.to_string())?;
            let want = oracle::brute_quantile(&values, alpha);
            ensure(got == want, || format!("instance {key}, alpha {alpha}: {got} vs {want}"))?;
        }
    }
    Ok(())
}

fn grid_vs_scan() -> Result<(), String> {
    for key in 0..100 {
        let sm = random_matrix(key, 2 + key as usize % 10, 2 + key as usize % 9);
        for &gamma in &GAMMAS {
            for g in 0..sm.d() {
                let got = s_g_grid(sm.observed(), sm.row(g), gamma);
                let want = oracle::midpoint_sup(sm.observed(), sm.row(g), None, gamma);
                ensure(got == want, || format!("instance {key}, row {g}, gamma {gamma}: {got} vs {want}"))?;
            }
        }
    }
    Ok(())
}

fn gamma_zero_single() -> Result<(), String> {
    for key in 0..50 {
        let sm = random_matrix(key, 10 + key as usize % 11, 3 + key as usize % 8);
        let cfg = AnalysisConfig::new(0.1, 0.0).map_err(|e| e.to_string())?;
        let fdx = single_step(&sm, &cfg).map_err(|e| e.to_string())?;
        let (q0, mx) = maxt_single(&sm, 0.1).map_err(|e| e.to_string())?;
        ensure(fdx.q == q0 && fdx.rejections.indices == mx.indices, || {
            format!("instance {key}: fdx q {} vs maxT {q0}", fdx.q)
        })?;
    }
    Ok(())
}

fn gamma_zero_sequential() -> Result<(), String> {
    for key in 0..50 {
        let sm = random_matrix(key + 1000, 10 + key as usize % 11, 3 + key as usize % 6);
        let cfg = AnalysisConfig::new(0.2, 0.0).map_err(|e| e.to_string())?;
        let fdx = sequential_exact(&sm, &cfg).map_err(|e| e.to_string())?;
        let mx = maxt_sequential(&sm, 0.2).map_err(|e| e.to_string())?;
        let want = oracle::maxt_sequential_q(&sm, 0.2);
        ensure(fdx.q_lim == mx.q_lim && mx.q_lim == want, || {
            format!("instance {key}: fdx {} vs maxT {} vs oracle {want}", fdx.q_lim, mx.q_lim)
        })?;
    }
    Ok(())
}

fn sequential_vs_exhaustive() -> Result<(), String> {
    for key in 0..40 {
        let sm = random_matrix(key + 2000, 4 + key as usize % 7, 3 + key as usize % 5);
        for gamma in [0.1, 0.25, 0.5] {
            let cfg = AnalysisConfig::new(0.25, gamma).map_err(|e| e.to_string())?;
            let got = sequential_exact(&sm, &cfg).map_err(|e| e.to_string())?.q_lim;
            let want = oracle::sequential_exhaustive(&sm, 0.25, gamma);
            ensure(got == want, || format!("instance {key}, gamma {gamma}: {got} vs {want}"))?;
        }
    }
    Ok(())
}

fn pvalue_duality() -> Result<(), String> {
    for key in 0..50 {
        let pm = random_pvalues(key, 5 + key as usize % 15, 2 + key as usize % 9);
        for &gamma in &GAMMAS {
            let cfg = AnalysisConfig::new(0.2, gamma).map_err(|e| e.to_string())?;
            let got = single_step_pvalues(&pm, &cfg).map_err(|e| e.to_string())?.rejections;
            let want = oracle::pvalue_direct(&pm, 0.2, gamma);
            ensure(got.indices == want.indices, || {
                format!("instance {key}, gamma {gamma}: {:?} vs {:?}", got.indices, want.indices)
            })?;
        }
    }
    Ok(())
}

fn zoom_bounds() -> Result<(), String> {
    let obs: Vec<f64> = (0..100).map(f64::from).collect();
    let t = zoom_table(&obs, 77.0, 0.2);
    let got: Vec<(usize, usize)> = t.rows.iter().filter(|r| [22, 9, 4].contains(&r.k)).map(|r| (r.k, r.v_bound)).collect();
    ensure(got == [(22, 4), (9, 1), (4, 0)], || format!("zoom rows {got:?}"))?;
    ensure(v_bound(19, 0.1) == 1 && v_bound(9, 0.1) == 0 && v_bound(186, 0.1) == 18, || "gamma 0.1 bounds".into())
}
