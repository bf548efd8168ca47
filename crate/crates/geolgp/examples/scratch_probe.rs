//! Scratch probe for a hard connect pair (not part of the library).

use geolgp::boundary::{convexity_certificate, BoundaryDatum, Piece, PieceKind};
use geolgp::domain::DomainBoundary;
use geolgp::geom::v;
use geolgp::metric::{self, dijkstra, MetricOpts};
use geolgp::transport::atoms_on_boundary;
use geolgp::weight::ConformalWeight;
use std::f64::consts::TAU;

fn main() {
    let d = DomainBoundary::circle(1.0).unwrap();
    let w =
        ConformalWeight::radial_bump(1.0, 1.5, v(0.25, -0.1), 1.0).unwrap();
    let opts = MetricOpts::for_domain(&d);

    let cert = convexity_certificate(&w, &d, 60, 7, &opts).unwrap();
    println!("certificate: {cert:?}");

    let g = BoundaryDatum::new(vec![Piece {
        theta_a: 0.0,
        theta_b: TAU,
        kind: PieceKind::Sinusoid { amp: 1.0, omega: 1.0, phase: 0.0, offset: 0.0 },
    }])
    .unwrap();
    let f = g.tangential_derivative(&d);
    let (fp, fm) = f.split();
    let src = atoms_on_boundary(&d, &fp.discretize(&d, 24).unwrap());
    let tgt = atoms_on_boundary(&d, &fm.discretize(&d, 24).unwrap());
    println!("src thetas: {:?}", src.iter().map(|a| a.theta).collect::<Vec<_>>());
    println!("tgt thetas: {:?}", tgt.iter().map(|a| a.theta).collect::<Vec<_>>());

    let mut conn_opts = opts.clone();
    conn_opts.error_on_multi = false;
    let mut failures = Vec::new();
    for (j, t) in tgt.iter().enumerate() {
        let field = dijkstra::dijkstra_field(&w, &d, t.position, opts.seed_cells.min(64)).unwrap();
        for (i, s) in src.iter().enumerate() {
            match metric::connect_seeded(&w, &d, s.position, t.position, Some(&field), &conn_opts)
            {
                Ok(geo) => {
                    let est = field.distance_at(s.position).unwrap_or(f64::NAN);
                    if (geo.weighted_length - est).abs() > 0.05 * est.max(0.1) {
                        println!(
                            "pair ({i},{j}) len {:.6} vs dijkstra {est:.6} (large gap)",
                            geo.weighted_length
                        );
                    }
                }
                Err(e) => {
                    let est = field.distance_at(s.position).unwrap_or(f64::NAN);
                    println!(
                        "FAIL pair ({i},{j}) src θ={:.4} tgt θ={:.4} dijkstra est {est:.4}: {e}",
                        s.theta, t.theta
                    );
                    failures.push((i, j));
                }
            }
        }
    }
    println!("{} failures", failures.len());
}
