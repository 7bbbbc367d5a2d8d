// Spectra of rank-two perturbations of the identity, including the
// Gaussian dynamics matrices of phase retrieval.
//
// ```bash
// cargo run -p gdse --example rank_two_spectra
// ```

use gdse::linalg::sym_eigenvalues;
use gdse::state_evolution::{mz_matrix_eigs, rank2_eigs, MzMode};
use gdse::{LinkFunction, ModelSpec, NoiseSpec};
use nalgebra::{DMatrix, DVector};
use std::error::Error;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let u = [0.3, -1.2, 0.5, 0.8, 0.1];
    let v = [1.0, 0.4, -0.2, 0.0, 0.7];
    let (c0, c11, c12, c22) = (0.5, 2.0, -0.7, 1.3);
    let fast = rank2_eigs(c0, c11, c12, c22, &u, &v)?;

    let (uu, vv) = (DVector::from_row_slice(&u), DVector::from_row_slice(&v));
    let dense = DMatrix::identity(5, 5) * c0
        + &uu * uu.transpose() * c11
        + (&uu * vv.transpose() + &vv * uu.transpose()) * c12
        + &vv * vv.transpose() * c22;
    let exact = sym_eigenvalues(&dense);
    println!("rank-two: {:?}\ndense:    {exact:?}", fast.expand(5));
    for (a, b) in fast.expand(5).iter().zip(&exact) {
        assert!((a - b).abs() < 1e-10);
    }

    // Phase retrieval: at u = mu* the two Gaussian dynamics matrices
    // coincide, with bulk 4 and a single outlier 12 along mu*.
    let pr = ModelSpec::squared_on_link(LinkFunction::square(), NoiseSpec::zero());
    let m = mz_matrix_eigs(&pr, 1.0, 1.0, 1.0, MzMode::WithSignal);
    let s = mz_matrix_eigs(&pr, 1.0, 1.0, 1.0, MzMode::SelfPair);
    println!("signal path: {:?}\nself pair:   {:?}", m.expand(4), s.expand(4));
    assert_eq!(m.expand(4), vec![4.0, 4.0, 4.0, 12.0]);
    assert_eq!(s.expand(4), m.expand(4));

    // On the plateau |u|^2 = 1/3 with u orthogonal to mu*, the self matrix
    // has a negative direction along mu*.
    let plateau = mz_matrix_eigs(&pr, 1.0 / 3.0, 0.0, 1.0, MzMode::SelfPair);
    println!("plateau self pair: {:?}", plateau.expand(4));
    assert!((plateau.min() + 4.0).abs() < 1e-12);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
