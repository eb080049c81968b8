use std::f64::consts::PI;

use subrosa::distribution::{check_bracket_generating, horizontality_residual};
use subrosa::moser::{moser_flow_with, MoserOptions};
use subrosa::ops::grad;
use subrosa::solver::{hodge_decompose, solve_poisson, sub_laplacian};
use subrosa::{inner_vector, Density, Error, Frame, Grid, ScalarField, Stencil, VectorField};

#[test]
fn flat_laplacian_matches_stencil_symbol() {
    // On a Fourier mode the discrete operator is minus the squared stencil symbol.
    for order in [2, 4, 6, 8] {
        let g = Grid::cube(16, 3)
            .unwrap()
            .with_stencil(Stencil::from_order(order).unwrap());
        let frame = Frame::flat(g).unwrap();
        let u = ScalarField::from_fn(g, |p| (2.0 * PI * (p[0] + 2.0 * p[1])).sin()).unwrap();
        let lu = sub_laplacian(&u, &frame, &Density::uniform(g)).unwrap();
        let h = g.spacing(0);
        let st = g.stencil();
        let lambda = (st.symbol(2.0 * PI * h) / h).powi(2) + (st.symbol(4.0 * PI * h) / h).powi(2);
        let err = lu.combine(1.0, &u, lambda).unwrap().linf_norm();
        assert!(err < 1e-9 * lambda, "order {order}: {err:e}");
    }
}

#[test]
fn eigenvalue_converges_at_stencil_order() {
    let err = |n: usize| {
        let g = Grid::cube(n, 3).unwrap().with_stencil(Stencil::from_order(4).unwrap());
        let frame = Frame::sin_heisenberg(g).unwrap();
        let u = ScalarField::from_fn(g, |p| (2.0 * PI * p[1]).cos()).unwrap();
        let lu = sub_laplacian(&u, &frame, &Density::uniform(g)).unwrap();
        lu.combine(1.0, &u, (2.0 * PI).powi(2)).unwrap().linf_norm() / (2.0 * PI).powi(2)
    };
    let ratio = err(12) / err(24);
    assert!((14.0..18.0).contains(&ratio), "{ratio}");
}

#[test]
fn mean_offset_is_rejected() {
    let g = Grid::cube(8, 3).unwrap();
    let frame = Frame::sin_heisenberg(g).unwrap();
    let rho = ScalarField::from_fn(g, |p| (2.0 * PI * p[2]).sin() + 1e-3).unwrap();
    let r = solve_poisson(&rho, &frame, &Density::uniform(g), 1e-10);
    assert!(matches!(r, Err(Error::Solvability(_))), "{r:?}");
}

#[test]
fn hodge_parts_are_orthogonal() {
    let g = Grid::cube(12, 3).unwrap();
    let frame = Frame::sin_heisenberg(g).unwrap();
    let nu = Density::normalized(g, g.coords().map(|p| 1.0 + 0.3 * (2.0 * PI * p[0]).cos()).collect()).unwrap();
    let [x1, x2] = [&frame.samples()[0], &frame.samples()[1]];
    let a = ScalarField::from_fn(g, |p| (2.0 * PI * p[2]).sin()).unwrap();
    let b = ScalarField::from_fn(g, |p| (2.0 * PI * (p[0] - p[1])).cos()).unwrap();
    let w = VectorField::new(
        g,
        (0..3)
            .map(|c| {
                (0..g.len())
                    .map(|i| a.values()[i] * x1.component(c)[i] + b.values()[i] * x2.component(c)[i])
                    .collect()
            })
            .collect(),
    )
    .unwrap();
    let d = hodge_decompose(&w, &frame, &nu, 1e-12).unwrap();
    let sum = d.gradient.combine(1.0, &d.remainder, 1.0).unwrap();
    assert!(sum.combine(1.0, &w, -1.0).unwrap().linf_norm() < 1e-13);
    // div_nu U = 0 is orthogonality to every flat gradient.
    let cross = inner_vector(&d.remainder, &grad(&d.potential), &nu).unwrap();
    assert!(cross.abs() < 1e-9 * inner_vector(&w, &w, &nu).unwrap());
    assert!(horizontality_residual(&d.gradient, &frame).unwrap() < 1e-12);
}

#[test]
fn equal_densities_need_no_transport() {
    let g = Grid::cube(8, 3).unwrap();
    let frame = Frame::sin_heisenberg(g).unwrap();
    let mu = Density::normalized(g, g.coords().map(|p| 1.0 + 0.2 * (2.0 * PI * p[1]).sin()).collect()).unwrap();
    let run = moser_flow_with(&mu, &mu, &frame, &MoserOptions::new(4, 1e-10)).unwrap();
    assert!(run.report.l2_error < 1e-12);
    assert!(run.flow.max_displacement() < 1e-12);
}

#[test]
fn mass_mismatch_is_rejected() {
    let g = Grid::cube(8, 3).unwrap();
    let frame = Frame::sin_heisenberg(g).unwrap();
    let heavy = Density::from_ratio(g, vec![1.01; g.len()]).unwrap();
    let r = moser_flow_with(&Density::uniform(g), &heavy, &frame, &MoserOptions::new(4, 1e-10));
    assert!(matches!(r, Err(Error::Solvability(_))));
}

#[test]
fn growth_vectors() {
    let g = Grid::cube(8, 3).unwrap();
    let report = check_bracket_generating(&Frame::sin_heisenberg(g).unwrap(), 4).unwrap();
    assert!(report.bracket_generating);
    assert_eq!(report.max_depth_needed, Some(3));
    // sin(2 pi x) has vanishing derivative at x = 1/4 and 3/4 only.
    for i in 0..g.len() {
        let expected: &[usize] = if g.multi_index(i)[0] % 4 == 2 {
            &[2, 2, 3]
        } else {
            &[2, 3]
        };
        assert_eq!(report.at(i), expected, "node {i}");
    }
    let flat = check_bracket_generating(&Frame::flat(g).unwrap(), 4).unwrap();
    assert!(flat.growth.iter().all(|v| v == &[3]));
}

#[test]
fn abelian_frame_is_not_bracket_generating() {
    let g = Grid::cube(8, 3).unwrap();
    let frame = Frame::from_expressions(g, &[vec!["1", "0", "0"], vec!["0", "1", "0"]]).unwrap();
    let report = check_bracket_generating(&frame, 3).unwrap();
    assert!(!report.bracket_generating);
    assert_eq!(report.max_depth_needed, None);
}
