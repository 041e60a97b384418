//! Moment models ψ(x, θ, η), nuisance functions, Jacobians, Neyman
//! orthogonality checks and oracle asymptotic variances.

mod checks;
mod nuisance;
mod oracle;
mod score;

pub use checks::{
    evaluate_score, evaluate_scores, mean_score, orthogonality_check, random_linear_directions, score_jacobian,
    JacobianMethod, OrthogonalityReport, StepGrid,
};
pub use nuisance::{FnPredictor, LinearPredictor, Nuisance, Predictor};
pub use oracle::{
    non_orthogonal_oracle_nuisance, oracle_psi0, oracle_v, plr_oracle_nuisance, OracleVariance, ScoreFunctional,
};
pub(crate) use oracle::{matrix_rows, serialize_matrix};
pub use score::{HolderModulus, IvModel, LocationModel, ModelConfig, MomentModel, NonOrthogonalPlrModel, PlrModel};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::empirical_process::{Population, ProjectionMode};
    use crate::se_array::{simulate, IvDesign, PlrDesign, Shape};
    use nalgebra::DMatrix;

    fn plr_setup() -> (PlrDesign, crate::DgpSpec, std::sync::Arc<dyn MomentModel>) {
        let design = PlrDesign::default();
        let spec = design.spec(Shape::square(2, 6).unwrap()).unwrap();
        let model = ModelConfig::plr().build(spec.fields()).unwrap();
        (design, spec, model)
    }

    #[test]
    fn jacobians_match_hand_derivatives() {
        let (design, spec, model) = plr_setup();
        let s = simulate(&spec, 3).unwrap();
        let eta = plr_oracle_nuisance(&design);
        let a = score_jacobian(model.as_ref(), &s, &[0.3], &eta, JacobianMethod::Analytic).unwrap();
        let f = score_jacobian(model.as_ref(), &s, &[0.3], &eta, JacobianMethod::central()).unwrap();
        let m = eta.get("m").unwrap();
        let d = s.field_index("d").unwrap();
        let hand = s.mean_of(|r| (r[d] - m.predict(&r[2..])).powi(2));
        assert!((a[(0, 0)] - hand).abs() < 1e-12);
        assert!((a[(0, 0)] - f[(0, 0)]).abs() <= 1e-6 * hand.abs());

        let iv = IvDesign::default().spec(Shape::square(2, 5).unwrap()).unwrap();
        let s = simulate(&iv, 1).unwrap();
        let model = ModelConfig::Iv { y: "y".into(), d: "d".into(), instruments: None }.build(iv.fields()).unwrap();
        let j = score_jacobian(model.as_ref(), &s, &[1.0], &Nuisance::new(), JacobianMethod::Analytic).unwrap();
        let hand = s.mean_of(|r| r[1] * r[2]);
        assert!((j[(0, 0)] - hand).abs() < 1e-12);
        let loc = LocationModel::new(0);
        let j = score_jacobian(&loc, &s, &[7.0], &Nuisance::new(), JacobianMethod::central()).unwrap();
        assert!((j[(0, 0)] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn plr_score_is_orthogonal_and_control_is_not() {
        let (design, spec, model) = plr_setup();
        let pop = Population::exact(&spec).unwrap();
        let eta = plr_oracle_nuisance(&design);
        let dirs = random_linear_directions(PlrModel::NUISANCES, 4, 10, 1);
        let rep = orthogonality_check(model.as_ref(), &pop, &[design.theta0], &eta, &dirs, StepGrid::default()).unwrap();
        assert!(rep.max_abs <= 1e-6, "{rep:?}");

        let control = ModelConfig::NonOrthogonalPlr { y: "y".into(), d: "d".into(), covariates: None }
            .build(spec.fields())
            .unwrap();
        let g = non_orthogonal_oracle_nuisance(&design);
        let dirs = random_linear_directions(NonOrthogonalPlrModel::NUISANCES, 4, 10, 1);
        let rep = orthogonality_check(control.as_ref(), &pop, &[design.theta0], &g, &dirs, StepGrid::default()).unwrap();
        assert!(rep.max_abs >= 1e-2, "{rep:?}");
        // Closed form: −E[δ(x) d] = −(c'β_m) for unit-variance independent covariates.
        for (dir, got) in dirs.iter().zip(&rep.per_direction) {
            let lin = dir.get("g").unwrap();
            let c: Vec<f64> = (0..4)
                .map(|j| {
                    let mut e = vec![0.0; 4];
                    e[j] = 1.0;
                    lin.predict(&e) - lin.predict(&[0.0; 4])
                })
                .collect();
            let expected: f64 = c.iter().zip(&design.beta_m).map(|(a, b)| a * b).sum();
            assert!((got - expected.abs()).abs() < 1e-9);
        }
        let zero = vec![Nuisance::new().with("g", std::sync::Arc::new(LinearPredictor::zero(4)))];
        let rep = orthogonality_check(control.as_ref(), &pop, &[design.theta0], &g, &zero, StepGrid::default()).unwrap();
        assert_eq!(rep.max_abs, 0.0);
    }

    #[test]
    fn plr_oracle_variance() {
        let (design, spec, model) = plr_setup();
        let eta = plr_oracle_nuisance(&design);
        let o = oracle_psi0(model.as_ref(), &spec, &[design.theta0], &eta, ProjectionMode::Exact).unwrap();
        assert!(!o.degenerate);
        assert!((o.dimension_variances[0][(0, 0)] - 1.0).abs() < 1e-12);
        assert!((o.dimension_variances[1][(0, 0)] - 1.0).abs() < 1e-12);
        assert!((o.psi0[(0, 0)] - 2.0).abs() < 1e-12);
        assert!((o.j0[(0, 0)] - 3.0).abs() < 1e-12);
        let v = oracle_v(&o).unwrap();
        assert!((v[(0, 0)] - 2.0 / 9.0).abs() < 1e-12);
        let scaled = o.clone().with_upsilon(DMatrix::from_element(1, 1, 7.0));
        assert!((oracle_v(&scaled).unwrap()[(0, 0)] - v[(0, 0)]).abs() < 1e-14);
        let wide = o.for_shape(&Shape::new(vec![6, 12]).unwrap()).unwrap();
        assert_eq!(wide.mu, vec![1.0, 0.5]);
        assert!((wide.psi0[(0, 0)] - 1.5).abs() < 1e-12);

        let iid = spec.iid_degenerate();
        let o = oracle_psi0(model.as_ref(), &iid, &[design.theta0], &eta, ProjectionMode::Exact).unwrap();
        assert!(o.degenerate);
        assert!(o.psi0[(0, 0)].abs() < 1e-12);
    }

    #[test]
    fn sandwich_examples() {
        let one = |v: f64| DMatrix::from_element(1, 1, v);
        let o = OracleVariance {
            shape: Shape::square(2, 2).unwrap(),
            mu: vec![1.0, 1.0],
            dimension_variances: vec![one(2.0), one(2.0)],
            psi0: one(4.0),
            j0: one(2.0),
            upsilon: one(1.0),
            degenerate: false,
        };
        assert!((oracle_v(&o).unwrap()[(0, 0)] - 1.0).abs() < 1e-15);
        let rank_deficient = OracleVariance { j0: one(0.0), ..o };
        assert!(matches!(oracle_v(&rank_deficient), Err(crate::Error::RankDeficient(_))));
    }
}
