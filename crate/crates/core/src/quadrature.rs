//! Adaptive Gauss–Kronrod integration on intervals and a tensorized
//! midpoint rule on squares.

#![allow(clippy::excessive_precision)]

use rayon::prelude::*;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// One G7-K15 panel: Kronrod estimate and |K15 - G7|.
fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Integrates `f` over `[a, b]` by recursive bisection of G7-K15 panels
/// until the summed error estimate is below `abs_tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64) -> Integral {
    const MAX_PANELS: usize = 4096;
    let (v, e) = gk15(&f, a, b);
    let mut panels = vec![(a, b, v, e)];
    let mut evaluations = 15;
    loop {
        let total_error: f64 = panels.iter().map(|p| p.3).sum();
        if total_error <= abs_tol || panels.len() >= MAX_PANELS {
            break;
        }
        let worst = panels.iter().enumerate().max_by(|x, y| x.1 .3.total_cmp(&y.1 .3)).map(|(i, _)| i).unwrap();
        let (lo, hi, _, _) = panels.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (vl, el) = gk15(&f, lo, mid);
        let (vr, er) = gk15(&f, mid, hi);
        evaluations += 30;
        panels.push((lo, mid, vl, el));
        panels.push((mid, hi, vr, er));
    }
    panels.sort_by(|x, y| x.0.total_cmp(&y.0));
    Integral { value: panels.iter().map(|p| p.2).sum(), error: panels.iter().map(|p| p.3).sum(), evaluations }
}

/// Midpoint rule with `n × n` cells over `[-half, half]²`, summing rows in
/// parallel and reducing them in order.
pub fn midpoint_square(f: impl Fn(f64, f64) -> f64 + Sync, half: f64, n: usize) -> f64 {
    let h = 2.0 * half / n as f64;
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|j| {
            let y = -half + (j as f64 + 0.5) * h;
            (0..n).map(|i| f(-half + (i as f64 + 0.5) * h, y)).sum::<f64>()
        })
        .collect();
    rows.iter().sum::<f64>() * h * h
}

/// Several integrands sharing one midpoint grid.
pub fn midpoint_square_multi<const N: usize>(f: impl Fn(f64, f64) -> [f64; N] + Sync, half: f64, n: usize) -> [f64; N] {
    let h = 2.0 * half / n as f64;
    let rows: Vec<[f64; N]> = (0..n)
        .into_par_iter()
        .map(|j| {
            let y = -half + (j as f64 + 0.5) * h;
            let mut acc = [0.0; N];
            for i in 0..n {
                let v = f(-half + (i as f64 + 0.5) * h, y);
                for k in 0..N {
                    acc[k] += v[k];
                }
            }
            acc
        })
        .collect();
    let mut total = [0.0; N];
    for row in rows {
        for k in 0..N {
            total[k] += row[k];
        }
    }
    total.map(|v| v * h * h)
}

/// Midpoint integration refined by doubling from `n0` cells per side until
/// every component changes by at most `rel_tol` (relative to its magnitude)
/// or `n_max` is reached. Returns the values and the final resolution.
pub fn refine_midpoint<const N: usize>(
    f: impl Fn(f64, f64) -> [f64; N] + Sync,
    half: f64,
    n0: usize,
    n_max: usize,
    rel_tol: f64,
) -> ([f64; N], usize) {
    let mut n = n0;
    let mut prev = midpoint_square_multi(&f, half, n);
    while n < n_max {
        n *= 2;
        let next = midpoint_square_multi(&f, half, n);
        let converged = prev.iter().zip(&next).all(|(a, b)| (a - b).abs() <= rel_tol * b.abs().max(a.abs()) || a == b);
        prev = next;
        if converged {
            break;
        }
    }
    (prev, n)
}
