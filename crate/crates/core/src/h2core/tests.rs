use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::geometry::{generate, DistributionKind, DistributionSpec, Particle};
use crate::tree::{balance_2to1, build_tree, Octree};

fn setup(kind: DistributionKind, n: usize, seed: u64) -> (Vec<Particle>, Octree) {
    let ps = generate(&DistributionSpec::new(kind, n, seed)).unwrap();
    let tree = balance_2to1(build_tree(ps.clone(), 16).unwrap()).unwrap();
    (ps, tree)
}

fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

/// Kernel matrix of the Morton-sorted points.
fn sorted_oracle(h2: &H2Matrix) -> DMatrix<f64> {
    let ps: Vec<Particle> = h2
        .sorted_points()
        .iter()
        .enumerate()
        .map(|(i, &p)| Particle::new(i as u64, p))
        .collect();
    dense_matrix(&ps, h2.kernel()).unwrap()
}

fn block(a: &DMatrix<f64>, topo: &Topology, i: usize, j: usize) -> DMatrix<f64> {
    a.view((topo.ranges[i].start, topo.ranges[j].start), (topo.size(i), topo.size(j))).into_owned()
}

#[test]
fn one_kernel_blocks_are_rank_one_and_exact() {
    let (_, tree) = setup(DistributionKind::RandomCube, 1500, 1);
    let h2 = compress(&tree, &KernelSpec::new(KernelKind::One), &CompressOptions::new(1e-8)).unwrap();
    let topo = h2.topology();
    assert!(!h2.blocks().lowrank.is_empty());
    for b in &h2.blocks().lowrank {
        assert_eq!(b.s.shape(), (1, 1));
        let u = h2.row_basis().explicit(topo, b.row);
        let v = h2.col_basis().explicit(topo, b.col);
        let approx = &u * &b.s * v.transpose();
        assert!(approx.iter().all(|&x| (x - 1.0).abs() < 1e-12));
    }
    let st = h2.storage_report();
    assert_eq!(st.coupling, h2.blocks().lowrank.len() * WORD_BYTES);
}

#[test]
fn laplace_blocks_match_oracle() {
    let (_, tree) = setup(DistributionKind::RandomCube, 512, 2);
    let h2 = compress(&tree, &KernelSpec::new(KernelKind::Laplace3d), &CompressOptions::new(1e-6)).unwrap();
    let a = sorted_oracle(&h2);
    let topo = h2.topology();
    assert!(!h2.blocks().lowrank.is_empty());
    for b in &h2.blocks().lowrank {
        assert!(!b.capped);
        let exact = block(&a, topo, b.row, b.col);
        let u = h2.row_basis().explicit(topo, b.row);
        let v = h2.col_basis().explicit(topo, b.col);
        let err = (&exact - &u * &b.s * v.transpose()).norm() / exact.norm();
        assert!(err <= 1e-5, "block ({}, {}) error {err}", b.row, b.col);
        assert!((b.norm - exact.norm()).abs() <= 1e-12 * exact.norm());
        assert!((b.rel_error - err).abs() <= 1e-6);
    }
    for b in &h2.blocks().dense {
        assert_eq!(b.d, block(&a, topo, b.row, b.col));
    }
}

#[test]
fn ranks_grow_as_eps_shrinks() {
    let (_, tree) = setup(DistributionKind::RandomCube, 512, 3);
    let k = KernelSpec::new(KernelKind::Laplace3d);
    let ranks: Vec<Vec<usize>> = [1e-2, 1e-4, 1e-6]
        .iter()
        .map(|&eps| compress(&tree, &k, &CompressOptions::new(eps)).unwrap().row_basis().ranks.clone())
        .collect();
    let total: Vec<usize> = ranks.iter().map(|r| r.iter().sum()).collect();
    assert!(total[0] <= total[1] && total[1] <= total[2], "{total:?}");
    for l in 0..ranks[0].len() {
        if tree.node(l).is_leaf() {
            assert!(ranks[0][l] <= ranks[1][l] && ranks[1][l] <= ranks[2][l]);
        }
    }
}

#[test]
fn matvec_matches_dense_oracle() {
    let (ps, tree) = setup(DistributionKind::RandomCube, 2048, 4);
    let k = KernelSpec::new(KernelKind::Laplace3d);
    let h2 = compress(&tree, &k, &CompressOptions::new(1e-6)).unwrap();
    let x = random_vec(2048, 5);
    let y = h2.matvec(&x).unwrap();
    let exact = dense_matvec(&ps, &k, &x).unwrap();
    let err = rel_err(&y, &exact);
    assert!(err <= 1e-5, "relative error {err}");
}

#[test]
fn matvec_other_kernels() {
    let (ps, tree) = setup(DistributionKind::Plummer, 1200, 6);
    let x = random_vec(1200, 7);
    for k in [
        KernelSpec::new(KernelKind::Laplace2d),
        KernelSpec::new(KernelKind::Gaussian).with_sigma(0.3),
        KernelSpec::new(KernelKind::Laplace3d).with_regularization(1e-3),
    ] {
        let h2 = compress(&tree, &k, &CompressOptions::new(1e-6)).unwrap();
        let err = rel_err(&h2.matvec(&x).unwrap(), &dense_matvec(&ps, &k, &x).unwrap());
        assert!(err <= 1e-5, "{:?}: {err}", k.kind);
    }
}

#[test]
fn zero_vector_and_row_sums() {
    let (_, tree) = setup(DistributionKind::SphereSurface, 900, 8);
    let h2 = compress(&tree, &KernelSpec::new(KernelKind::Laplace3d), &CompressOptions::new(1e-4)).unwrap();
    assert!(h2.matvec(&vec![0.0; 900]).unwrap().iter().all(|&v| v == 0.0));
    assert!(h2.upsweep(&vec![0.0; 900]).unwrap().iter().all(|v| v.iter().all(|&e| e == 0.0)));

    let ones = compress(&tree, &KernelSpec::new(KernelKind::One), &CompressOptions::new(1e-6)).unwrap();
    let x = random_vec(900, 9);
    let sum: f64 = x.iter().sum();
    for y in ones.matvec(&x).unwrap() {
        assert!((y - sum).abs() <= 1e-11 * x.iter().map(|v| v.abs()).sum::<f64>());
    }
}

#[test]
fn dimension_mismatch_rejected() {
    let (_, tree) = setup(DistributionKind::RandomCube, 100, 1);
    let h2 = compress(&tree, &KernelSpec::new(KernelKind::One), &CompressOptions::default()).unwrap();
    assert!(matches!(h2.matvec(&[1.0; 99]), Err(crate::Error::Dimension { expected: 100, got: 99 })));
}

#[test]
fn single_leaf_is_one_dense_block() {
    let (ps, tree) = setup(DistributionKind::RandomCube, 12, 1);
    assert_eq!(tree.len(), 1);
    let k = KernelSpec::new(KernelKind::Laplace3d).with_regularization(0.1);
    let h2 = compress(&tree, &k, &CompressOptions::default()).unwrap();
    let st = h2.storage_report();
    assert_eq!(st.total, 12 * 12 * WORD_BYTES);
    assert_eq!(st.dense, st.total);
    let x = random_vec(12, 2);
    assert_eq!(h2.upsweep(&x).unwrap()[0].len(), 0);
    assert!(h2.lowrank_phase(&x).unwrap().iter().all(|&v| v == 0.0));
    let err = rel_err(&h2.matvec(&x).unwrap(), &dense_matvec(&ps, &k, &x).unwrap());
    assert!(err < 1e-14);
}

#[test]
fn upsweep_matches_explicit_bases() {
    let (_, tree) = setup(DistributionKind::RandomCube, 2048, 10);
    let h2 = compress(&tree, &KernelSpec::new(KernelKind::Laplace3d), &CompressOptions::new(1e-6)).unwrap();
    let x = random_vec(2048, 11);
    let xs: Vec<f64> = h2.permutation().iter().map(|&i| x[i]).collect();
    let xhat = h2.upsweep(&x).unwrap();
    let topo = h2.topology();
    let mut checked = 0;
    for j in 0..topo.len() {
        let v = h2.col_basis().explicit(topo, j);
        let r = topo.ranges[j].clone();
        let direct = v.transpose() * DVector::from_column_slice(&xs[r]);
        let diff = (&direct - &xhat[j]).norm();
        assert!(diff <= 1e-12 * (1.0 + direct.norm()), "node {j}: {diff}");
        if !topo.is_leaf(j) && h2.col_basis().ranks[j] > 0 {
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn explicit_bases_orthonormal_and_nested() {
    let (_, tree) = setup(DistributionKind::Plummer, 1500, 12);
    let eps = 1e-6;
    let h2 = compress(&tree, &KernelSpec::new(KernelKind::Laplace3d), &CompressOptions::new(eps)).unwrap();
    let a = sorted_oracle(&h2);
    let topo = h2.topology();
    for i in 0..topo.len() {
        let u = h2.row_basis().explicit(topo, i);
        let k = u.ncols();
        let gram = u.transpose() * &u;
        assert!((gram - DMatrix::identity(k, k)).amax() <= 1e-12);
        // the nested basis captures every admissible block of its row
        for &b in &h2.blocks().lowrank_by_row[i] {
            let blk = block(&a, topo, i, h2.blocks().lowrank[b].col);
            let resid = &blk - &u * (u.transpose() * &blk);
            assert!(resid.norm() <= eps * blk.norm());
        }
    }
}

#[test]
fn coupling_order_independent() {
    let (_, tree) = setup(DistributionKind::RandomCube, 2000, 13);
    let h2 = compress(&tree, &KernelSpec::new(KernelKind::Laplace3d), &CompressOptions::new(1e-6)).unwrap();
    let xhat = h2.upsweep(&random_vec(2000, 14)).unwrap();
    let yhat = h2.coupling(&xhat).unwrap();
    for (i, list) in h2.blocks().lowrank_by_row.iter().enumerate() {
        let mut rev = DVector::zeros(h2.row_basis().ranks[i]);
        for &b in list.iter().rev() {
            let blk = &h2.blocks().lowrank[b];
            rev += &blk.s * &xhat[blk.col];
        }
        assert!((&rev - &yhat[i]).norm() <= 1e-13 * (1.0 + yhat[i].norm()));
        if list.is_empty() {
            assert!(yhat[i].iter().all(|&v| v == 0.0));
        }
    }
    let zero: Vec<DVector<f64>> = xhat.iter().map(|v| DVector::zeros(v.len())).collect();
    assert!(h2.coupling(&zero).unwrap().iter().all(|v| v.iter().all(|&e| e == 0.0)));
    assert!(h2.downsweep(&zero).unwrap().iter().all(|&e| e == 0.0));
}

#[test]
fn linearity_and_phase_split() {
    let (_, tree) = setup(DistributionKind::Plummer, 1500, 15);
    let h2 = compress(&tree, &KernelSpec::new(KernelKind::Laplace3d), &CompressOptions::new(1e-4)).unwrap();
    let x = random_vec(1500, 16);
    let z = random_vec(1500, 17);
    let (alpha, beta) = (0.7, -1.3);
    let comb: Vec<f64> = x.iter().zip(&z).map(|(a, b)| alpha * a + beta * b).collect();
    let lhs = h2.matvec(&comb).unwrap();
    let hx = h2.matvec(&x).unwrap();
    let hz = h2.matvec(&z).unwrap();
    let rhs: Vec<f64> = hx.iter().zip(&hz).map(|(a, b)| alpha * a + beta * b).collect();
    assert!(rel_err(&lhs, &rhs) <= 1e-12);

    let d = h2.dense_phase(&x).unwrap();
    let l = h2.lowrank_phase(&x).unwrap();
    for k in 0..1500 {
        assert_eq!(d[k] + l[k], hx[k]);
    }
}

#[test]
fn capped_ranks_are_flagged() {
    let (_, tree) = setup(DistributionKind::RandomCube, 1000, 18);
    let opts = CompressOptions { max_rank: 2, ..CompressOptions::new(1e-8) };
    let h2 = compress(&tree, &KernelSpec::new(KernelKind::Laplace3d), &opts).unwrap();
    assert!(h2.max_rank() <= 2);
    let s = h2.summary();
    assert!(s.capped_blocks > 0);
    assert!(s.max_block_error > 1e-8);
}

#[test]
fn block_rows_bounded_on_uniform_sweep() {
    let mut maxima = Vec::new();
    for n in [8192, 32768, 131072] {
        let ps = generate(&DistributionSpec::new(DistributionKind::RandomCube, n, 19)).unwrap();
        let tree = balance_2to1(build_tree(ps, 16).unwrap()).unwrap();
        let topo = Topology::from_octree(&tree);
        maxima.push(BlockTree::build(&topo, DEFAULT_ETA).max_lowrank_per_row());
    }
    assert!(maxima.iter().max().unwrap() - maxima.iter().min().unwrap() <= 1, "{maxima:?}");
}

#[test]
fn container_round_trip() {
    let (_, tree) = setup(DistributionKind::Plummer, 700, 20);
    let h2 = compress(&tree, &KernelSpec::new(KernelKind::Gaussian).with_sigma(0.5), &CompressOptions::new(1e-5))
        .unwrap();
    let mut buf = Vec::new();
    h2.write_to(&mut buf).unwrap();
    assert_eq!(&buf[..4], b"H2FM");
    let back = H2Matrix::read_from(&buf[..]).unwrap();
    assert_eq!(back, h2);
    let x = random_vec(700, 21);
    assert_eq!(back.matvec(&x).unwrap(), h2.matvec(&x).unwrap());
    assert!(H2Matrix::read_from(&buf[..buf.len() - 3]).is_err());
}

#[test]
fn summary_serializes() {
    let (_, tree) = setup(DistributionKind::RandomCube, 800, 22);
    let h2 = compress(&tree, &KernelSpec::new(KernelKind::Laplace3d), &CompressOptions::new(1e-4)).unwrap();
    let s = h2.summary();
    assert_eq!(s.storage.total, s.storage.leaf_bases + s.storage.transfers + s.storage.coupling + s.storage.dense);
    assert_eq!(s.matvec_work.total, s.matvec_work.dense + s.matvec_work.upsweep + s.matvec_work.coupling + s.matvec_work.downsweep);
    let json = serde_json::to_string(&s).unwrap();
    assert!(json.contains("\"max_lowrank_blocks_per_row\""));
}

#[test]
fn invalid_options_rejected() {
    let (_, tree) = setup(DistributionKind::RandomCube, 100, 1);
    let k = KernelSpec::new(KernelKind::Laplace3d);
    for opts in [
        CompressOptions::new(0.0),
        CompressOptions::new(1.0),
        CompressOptions { max_rank: 0, ..Default::default() },
    ] {
        assert!(matches!(compress(&tree, &k, &opts), Err(crate::Error::Config(_))));
    }
}
