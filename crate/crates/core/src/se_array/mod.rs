//! Multi-index lattices and separately exchangeable arrays generated from
//! latent factors: X_i = τ({U_{i⊙e}}_{e ≠ 0}).

mod designs;
mod dgp;
mod latent;
mod lattice;
pub mod rng;
mod sample;

pub use designs::{AdditiveDesign, Design, IvDesign, LocationDesign, PlrDesign, ProductDesign};
pub use dgp::{generate_latent, materialize, simulate, Composition, DgpSpec};
pub use latent::{CellLatent, LatentComponent, LatentDist, LatentLayout, LatentTable};
pub use lattice::{enumerate_cells, Mask, MultiIndex, Shape};
pub use sample::ClusteredSample;

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(d: &[usize]) -> Shape {
        Shape::new(d.to_vec()).unwrap()
    }

    #[test]
    fn constant_factors_give_zero_table() {
        let spec = AdditiveDesign::new(2, LatentDist::constant(0.0)).spec(shape(&[3, 3])).unwrap();
        let t = generate_latent(&spec, 1).unwrap();
        for e in spec.shape().masks() {
            for idx in spec.shape().masked_indices(e) {
                assert_eq!(t.entry(e, &idx).unwrap(), &[0.0]);
            }
        }
    }

    #[test]
    fn same_seed_same_table() {
        let spec = PlrDesign::default().spec(shape(&[5, 4])).unwrap();
        let a = simulate(&spec, 42).unwrap();
        let b = simulate(&spec, 42).unwrap();
        let c = simulate(&spec, 43).unwrap();
        assert!(a.records().zip(b.records()).all(|(x, y)| x == y));
        assert!(a.records().zip(c.records()).any(|(x, y)| x != y));
    }

    #[test]
    fn entries_do_not_depend_on_shape() {
        // Keys use (seed, e, i⊙e) only, so a larger lattice extends a smaller one.
        let d = AdditiveDesign::new(2, LatentDist::Normal { mean: 0.0, sd: 1.0 });
        let small = generate_latent(&d.spec(shape(&[2, 3])).unwrap(), 8).unwrap();
        let big = generate_latent(&d.spec(shape(&[4, 5])).unwrap(), 8).unwrap();
        for e in small.shape().masks() {
            for idx in small.shape().masked_indices(e) {
                assert_eq!(small.entry(e, &idx).unwrap(), big.entry(e, &idx).unwrap());
            }
        }
    }

    #[test]
    fn rademacher_families_are_centered() {
        // Each family mean lies within 4σ/√count of 0 for every seed tried.
        let spec = AdditiveDesign::new(2, LatentDist::Rademacher).spec(shape(&[4, 4])).unwrap();
        for seed in 0..20 {
            let t = generate_latent(&spec, seed).unwrap();
            for e in spec.shape().masks() {
                let idx = spec.shape().masked_indices(e);
                let vals: Vec<f64> = idx.iter().map(|i| t.entry(e, i).unwrap()[0]).collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                assert!(mean.abs() <= 4.0 / (vals.len() as f64).sqrt(), "mask {e}: mean {mean}");
            }
        }
    }

    #[test]
    fn missing_entries_are_reported() {
        let spec = AdditiveDesign::new(2, LatentDist::Rademacher).spec(shape(&[2, 2])).unwrap();
        let t = generate_latent(&spec, 0).unwrap();
        let e = Mask::from_flags(&[1, 0]).unwrap();
        assert!(t.entry(e, &MultiIndex::new(vec![3, 0])).is_err());
        assert!(t.entry(Mask::zero(2), &MultiIndex::new(vec![1, 1])).is_err());
        let other = AdditiveDesign::new(2, LatentDist::Rademacher).spec(shape(&[3, 2])).unwrap();
        assert!(materialize(&t, &other).is_err());
    }

    #[test]
    fn identity_permutation_is_noop() {
        let spec = PlrDesign::default().spec(shape(&[3, 4])).unwrap();
        let s = simulate(&spec, 2).unwrap();
        let p = s.permute(&[vec![1, 2, 3], vec![1, 2, 3, 4]]).unwrap();
        assert!(s.records().zip(p.records()).all(|(x, y)| x == y));
    }

    #[test]
    fn swapping_rows() {
        let s = ClusteredSample::new(shape(&[2, 2]), vec!["x".into()], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = s.permute(&[vec![2, 1], vec![1, 2]]).unwrap();
        let v: Vec<f64> = p.records().map(|r| r[0]).collect();
        assert_eq!(v, vec![3.0, 4.0, 1.0, 2.0]);
        assert!(s.permute(&[vec![2, 1]]).is_err());
        assert!(s.permute(&[vec![1, 1], vec![1, 2]]).is_err());
        assert!(s.permute(&[vec![1, 2, 3], vec![1, 2]]).is_err());
    }

    #[test]
    fn permuting_keeps_latent_consistent() {
        let spec = ProductDesign::new(2, LatentDist::Normal { mean: 0.0, sd: 1.0 }).spec(shape(&[3, 3])).unwrap();
        let s = simulate(&spec, 4).unwrap();
        let p = s.permute(&[vec![3, 1, 2], vec![2, 3, 1]]).unwrap();
        let t = p.latent().unwrap();
        for lin in 0..p.len() {
            let idx = p.shape().cell_at(lin);
            let rec = spec.compose_record(&t.cell(&idx).unwrap());
            assert_eq!(rec, p.record(lin));
        }
    }

    #[test]
    fn permuted_generation_matches_in_distribution() {
        // Mean and variance of Ē_N X over seeds agree between permuted and
        // unpermuted samples within Monte Carlo error.
        let spec = AdditiveDesign::new(2, LatentDist::Rademacher).spec(shape(&[4, 5])).unwrap();
        let perms = [vec![4, 2, 1, 3], vec![5, 3, 1, 2, 4]];
        let reps = 400;
        let mut a = Vec::with_capacity(reps);
        let mut b = Vec::with_capacity(reps);
        for seed in 0..reps as u64 {
            let s = simulate(&spec, seed).unwrap();
            a.push(s.mean_of(|r| r[0] * r[0]));
            // Independent draws for the permuted arm.
            let s2 = simulate(&spec, seed + 10_000).unwrap().permute(&perms).unwrap();
            b.push(s2.mean_of(|r| r[0] * r[0]));
        }
        let mv = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
            (m, var)
        };
        let (ma, va) = mv(&a);
        let (mb, vb) = mv(&b);
        let se = ((va + vb) / reps as f64).sqrt();
        assert!((ma - mb).abs() < 4.0 * se, "means {ma} vs {mb}, se {se}");
        assert!((va / vb).ln().abs() < 0.4, "variances {va} vs {vb}");
    }

    #[test]
    fn disjoint_cells_are_independent() {
        // Chi-square contingency test on (X_11, X_22) over many seeds for a
        // finite-support design; cells share no coordinate.
        let spec = AdditiveDesign::new(2, LatentDist::Rademacher).spec(shape(&[2, 2])).unwrap();
        let atoms = [-3.0, -1.0, 1.0, 3.0];
        let pos = |v: f64| atoms.iter().position(|a| (a - v).abs() < 1e-9).unwrap();
        let mut table = [[0.0f64; 4]; 4];
        let reps = 4000;
        for seed in 0..reps {
            let s = simulate(&spec, seed).unwrap();
            let x = s.record_at(&MultiIndex::new(vec![1, 1]))[0];
            let y = s.record_at(&MultiIndex::new(vec![2, 2]))[0];
            table[pos(x)][pos(y)] += 1.0;
        }
        let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
        let cols: Vec<f64> = (0..4).map(|j| table.iter().map(|r| r[j]).sum()).collect();
        let mut chi2 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let exp = rows[i] * cols[j] / reps as f64;
                if exp > 0.0 {
                    chi2 += (table[i][j] - exp).powi(2) / exp;
                }
            }
        }
        // 9 degrees of freedom; 0.999 quantile is 27.88.
        assert!(chi2 < 27.88, "chi-square {chi2}");
    }

    #[test]
    fn iid_degeneracy_switch() {
        let spec = AdditiveDesign::new(2, LatentDist::Rademacher).spec(shape(&[3, 3])).unwrap().iid_degenerate();
        let t = generate_latent(&spec, 3).unwrap();
        for e in [Mask::from_flags(&[1, 0]).unwrap(), Mask::from_flags(&[0, 1]).unwrap()] {
            for idx in spec.shape().masked_indices(e) {
                assert_eq!(t.entry(e, &idx).unwrap(), &[0.0]);
            }
        }
        assert!(spec.layout().is_finite());
    }

    #[test]
    fn csv_export() {
        let s = ClusteredSample::new(shape(&[1, 2]), vec!["y".into()], vec![0.5, -1.0]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "i_1,i_2,y\n1,1,0.5\n1,2,-1\n");
    }
}
