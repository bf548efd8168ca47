//! Instance builders shared by unit, integration, and acceptance tests.
//!
//! Everything here is deterministic in its inputs (seeded RNG, no global state) so test
//! instances are reproducible across runs and machines. Compiled only for tests and behind
//! the `testutil` feature.

use crate::boundary::{BoundaryDatum, Piece, PieceKind};
use crate::domain::DomainBoundary;
use crate::transport::{atoms_on_boundary, Atom};
use crate::weight::ConformalWeight;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{PI, TAU};

/// Indicator of the upper arc: `g = 1` on `(0, π)`, `0` on `(π, 2π)`. Its tangential
/// derivative is a `+1` atom at `θ = 0` and a `−1` atom at `θ = π`.
pub fn upper_jump_datum() -> BoundaryDatum {
    BoundaryDatum::new(vec![
        Piece { theta_a: 0.0, theta_b: PI, kind: PieceKind::Constant { value: 1.0 } },
        Piece { theta_a: PI, theta_b: TAU, kind: PieceKind::Constant { value: 0.0 } },
    ])
    .expect("upper jump datum is valid")
}

/// One full-turn harmonic `g(θ) = amp·sin(ω θ + phase)`. `omega` must be a positive integer
/// so the trace closes without a seam jump.
pub fn harmonic_datum(amp: f64, omega: f64, phase: f64) -> BoundaryDatum {
    assert!(omega > 0.0 && omega.fract() == 0.0, "non-integer omega would add a seam jump");
    BoundaryDatum::new(vec![Piece {
        theta_a: 0.0,
        theta_b: TAU,
        kind: PieceKind::Sinusoid { amp, omega, phase, offset: 0.0 },
    }])
    .expect("harmonic datum is valid")
}

/// Smooth analytic datum with four monotone regions: `g = 0.8·sin(2θ + 0.4)`.
pub fn smooth_datum() -> BoundaryDatum {
    harmonic_datum(0.8, 2.0, 0.4)
}

/// Hölder-`1/2` derivative datum: `g = |θ − π|^{3/2}` on `[π/2, 3π/2]`, constant elsewhere.
///
/// The trace is `C^{1,1/2}`: its derivative vanishes like `|θ − π|^{1/2}` and changes sign at
/// `θ = π`, so transported mass piles up near that boundary point with density exponent `−1/2`
/// and the critical integrability exponent is `p = 2/(1 − 1/2) = 4`. Junction values match
/// (`(π/2)^{3/2}` on both sides), so the derivative has no atoms.
pub fn cusp_datum() -> BoundaryDatum {
    let cap = (PI / 2.0).powf(1.5);
    BoundaryDatum::new(vec![
        Piece {
            theta_a: PI / 2.0,
            theta_b: 3.0 * PI / 2.0,
            kind: PieceKind::Power { offset: 0.0, amp: 1.0, theta0: PI, exponent: 1.5 },
        },
        Piece {
            theta_a: 3.0 * PI / 2.0,
            theta_b: TAU + PI / 2.0,
            kind: PieceKind::Constant { value: cap },
        },
    ])
    .expect("cusp datum is valid")
}

/// `C^{1,1}` datum whose derivative has two disjoint smooth bumps: `g` rises from 0 to 1 over
/// `[π/4, 3π/4]` along a half cosine, stays at 1, falls back over `[5π/4, 7π/4]`, stays at 0.
/// The derivative is Lipschitz, vanishes at all four junctions, and its positive and negative
/// parts have well-separated supports.
pub fn two_bump_datum() -> BoundaryDatum {
    let ramp = |a: f64, b: f64, rising: bool| {
        // amp·sin(ωθ+φ)+offset hitting 0 at one end and 1 at the other with zero slope at both.
        let omega = PI / (b - a);
        let phase = -PI / 2.0 - omega * a;
        let amp = if rising { 0.5 } else { -0.5 };
        Piece { theta_a: a, theta_b: b, kind: PieceKind::Sinusoid { amp, omega, phase, offset: 0.5 } }
    };
    BoundaryDatum::new(vec![
        Piece { theta_a: 0.0, theta_b: PI / 4.0, kind: PieceKind::Constant { value: 0.0 } },
        ramp(PI / 4.0, 3.0 * PI / 4.0, true),
        Piece {
            theta_a: 3.0 * PI / 4.0,
            theta_b: 5.0 * PI / 4.0,
            kind: PieceKind::Constant { value: 1.0 },
        },
        ramp(5.0 * PI / 4.0, 7.0 * PI / 4.0, false),
        Piece { theta_a: 7.0 * PI / 4.0, theta_b: TAU, kind: PieceKind::Constant { value: 0.0 } },
    ])
    .expect("two bump datum is valid")
}

/// Smooth strictly positive sample field for the piecewise-bilinear weight family, covering
/// the domain's bounding box with margin: `k = base + amp·sin(f₁x + c₁)·sin(f₂y + c₂)`.
/// Requires `amp < base` so the weight stays positive.
pub fn smooth_bilinear_weight(
    domain: &DomainBoundary,
    base: f64,
    amp: f64,
    freq: (f64, f64),
    shift: (f64, f64),
) -> ConformalWeight {
    assert!(amp.abs() < base, "bilinear sample field must stay positive");
    let bbox = domain.bbox();
    let pad = 0.5;
    let (x0, y0) = (bbox.lo.x - pad, bbox.lo.y - pad);
    let h = 0.12;
    let nx = (((bbox.hi.x + pad - x0) / h).ceil() as usize) + 2;
    let ny = (((bbox.hi.y + pad - y0) / h).ceil() as usize) + 2;
    let mut samples = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let x = x0 + i as f64 * h;
            let y = y0 + j as f64 * h;
            samples.push(base + amp * (freq.0 * x + shift.0).sin() * (freq.1 * y + shift.1).sin());
        }
    }
    ConformalWeight::bilinear(nx, ny, x0, y0, h, samples).expect("sample field is valid")
}

/// Split a datum's tangential derivative and discretize both sides to at most `n` atoms each.
pub fn split_atoms(
    datum: &BoundaryDatum,
    domain: &DomainBoundary,
    n: usize,
) -> (Vec<Atom>, Vec<Atom>) {
    let f = datum.tangential_derivative(domain);
    let (fp, fm) = f.split();
    let src = atoms_on_boundary(domain, &fp.discretize(domain, n).expect("source budget"));
    let tgt = atoms_on_boundary(domain, &fm.discretize(domain, n).expect("target budget"));
    (src, tgt)
}

/// A randomized transport instance on a strictly convex domain.
pub struct RandomInstance {
    pub label: String,
    pub domain: DomainBoundary,
    pub weight: ConformalWeight,
    pub src: Vec<Atom>,
    pub tgt: Vec<Atom>,
}

/// Deterministic random instance: seeds `0, 1, 2, …` cycle through the three weight families
/// (constant, radial bump, bilinear samples) and alternate circle and ellipse domains. Both
/// sides carry unit mass on 4–12 atoms at well-separated angles, so every instance is a valid
/// balanced transport problem with at most 24 atoms total.
pub fn random_instance(seed: u64) -> RandomInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unit = |lo: f64, hi: f64| rng.gen_range(lo..hi);

    let domain = if (seed / 3) % 2 == 0 {
        DomainBoundary::circle(unit(0.85, 1.3)).expect("circle")
    } else {
        DomainBoundary::ellipse(unit(1.0, 1.35), unit(0.7, 0.95)).expect("ellipse")
    };
    let (weight, family) = match seed % 3 {
        0 => (ConformalWeight::constant(unit(0.6, 2.0)).expect("constant"), "constant"),
        1 => {
            let a = unit(0.7, 1.1);
            let b = unit(0.6, 1.8);
            let center = crate::geom::v(unit(-0.2, 0.2), unit(-0.2, 0.2));
            let width = unit(0.8, 1.4);
            (ConformalWeight::radial_bump(a, b, center, width).expect("bump"), "radial_bump")
        }
        _ => {
            let w = smooth_bilinear_weight(
                &domain,
                unit(1.0, 1.3),
                unit(0.15, 0.35),
                (unit(1.0, 2.0), unit(1.0, 2.0)),
                (unit(0.0, TAU), unit(0.0, TAU)),
            );
            (w, "bilinear")
        }
    };

    let n_src = rng.gen_range(4..=12usize);
    let n_tgt = rng.gen_range(4..=12usize);
    let total = n_src + n_tgt;
    // Jittered uniform slots keep every pair of atoms at least ~0.3/total turns apart.
    let phase = rng.gen_range(0.0..TAU);
    let slots: Vec<f64> = (0..total)
        .map(|i| phase + (i as f64 + 0.3 + 0.4 * rng.gen::<f64>()) / total as f64 * TAU)
        .collect();
    // Random assignment of slots to the source side.
    let mut is_src = vec![false; total];
    let mut placed = 0;
    while placed < n_src {
        let i = rng.gen_range(0..total);
        if !is_src[i] {
            is_src[i] = true;
            placed += 1;
        }
    }
    let mut masses: Vec<f64> = (0..total).map(|_| rng.gen_range(0.5..1.5)).collect();
    let (mut sum_s, mut sum_t) = (0.0, 0.0);
    for i in 0..total {
        if is_src[i] {
            sum_s += masses[i];
        } else {
            sum_t += masses[i];
        }
    }
    for i in 0..total {
        masses[i] /= if is_src[i] { sum_s } else { sum_t };
    }
    let side = |want: bool| -> Vec<(f64, f64)> {
        (0..total).filter(|&i| is_src[i] == want).map(|i| (slots[i], masses[i])).collect()
    };
    let src = atoms_on_boundary(&domain, &side(true));
    let tgt = atoms_on_boundary(&domain, &side(false));

    RandomInstance {
        label: format!("seed {seed}: {family} on {}", if (seed / 3) % 2 == 0 { "circle" } else { "ellipse" }),
        domain,
        weight,
        src,
        tgt,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn datums_validate_and_balance() {
        for (name, datum) in [
            ("jump", upper_jump_datum()),
            ("smooth", smooth_datum()),
            ("cusp", cusp_datum()),
            ("two_bump", two_bump_datum()),
        ] {
            let domain = DomainBoundary::circle(1.0).unwrap();
            let f = datum.tangential_derivative(&domain);
            assert!(f.total().abs() < 1e-9, "{name}: unbalanced derivative {}", f.total());
            let (fp, fm) = f.split();
            assert!(fp.positive_mass() > 0.1, "{name}: no positive mass");
            assert!((fp.positive_mass() - fm.positive_mass()).abs() < 1e-9, "{name}");
        }
    }

    #[test]
    fn cusp_moments_match_the_square_root_rate() {
        // On the unit circle the derivative density is 1.5·|θ−π|^{1/2}·sign(θ−π), so
        // ‖f‖₁ = 2(π/2)^{3/2} and ‖f‖₂ = 1.5·π/2 in closed form.
        let domain = DomainBoundary::circle(1.0).unwrap();
        let f = cusp_datum().tangential_derivative(&domain);
        let l1 = f.lp_norm(&domain, 1.0).unwrap();
        let l2 = f.lp_norm(&domain, 2.0).unwrap();
        // Fixed-order panel quadrature sees the square-root kink at ~1e-5 accuracy; the
        // squared integrand is piecewise linear with the kink on a panel edge, hence exact.
        assert!((l1 - 2.0 * (PI / 2.0).powf(1.5)).abs() < 1e-4, "l1 = {l1}");
        assert!((l2 - 1.5 * PI / 2.0).abs() < 1e-8, "l2 = {l2}");
    }

    #[test]
    fn random_instances_are_balanced_and_separated() {
        for seed in 0..12 {
            let inst = random_instance(seed);
            let s: f64 = inst.src.iter().map(|a| a.mass).sum();
            let t: f64 = inst.tgt.iter().map(|a| a.mass).sum();
            assert!((s - 1.0).abs() < 1e-12 && (t - 1.0).abs() < 1e-12, "{}", inst.label);
            assert!(inst.src.len() + inst.tgt.len() <= 24);
            let mut thetas: Vec<f64> =
                inst.src.iter().chain(&inst.tgt).map(|a| a.theta).collect();
            thetas.sort_by(f64::total_cmp);
            for w in thetas.windows(2) {
                assert!(w[1] - w[0] > 0.01, "{}: atoms too close", inst.label);
            }
            // The weight must be usable across the whole domain.
            for a in inst.src.iter().chain(&inst.tgt) {
                inst.weight.value(a.position).expect("weight covers the boundary");
            }
        }
    }

    #[test]
    fn seeds_cover_all_three_weight_families() {
        let labels: Vec<String> = (0..6).map(|s| random_instance(s).label).collect();
        for family in ["constant", "radial_bump", "bilinear"] {
            assert!(labels.iter().any(|l| l.contains(family)), "{family} missing");
        }
    }

    #[test]
    fn split_atoms_respects_budgets() {
        let domain = DomainBoundary::ellipse(1.2, 0.8).unwrap();
        let (src, tgt) = split_atoms(&smooth_datum(), &domain, 32);
        assert!(src.len() <= 32 && tgt.len() <= 32);
        assert!(src.len() >= 16, "budget should be mostly used: {}", src.len());
        let s: f64 = src.iter().map(|a| a.mass).sum();
        let t: f64 = tgt.iter().map(|a| a.mass).sum();
        assert!((s - t).abs() < 1e-9);
    }
}
