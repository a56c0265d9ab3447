use oeflex::caseio::ScenarioConfig;
use oeflex::clearing::{clear_full_dn, clear_no_dn, clear_oe};
use oeflex::envelopes::{compute_envelopes, weights, Envelope};
use oeflex::mcharness::{load_bundle, sample_scenario};
use oeflex::pfcheck::total_violations;
use oeflex::{OeMethod, WeightRule};

const TOL: f64 = 1e-6;

fn oe_for_all_dns(model: &oeflex::GridModel, polygon: &oeflex::PolygonApprox, method: OeMethod, rule: WeightRule) -> Vec<Envelope<f64>> {
    let mut out = Vec::new();
    for dn in &model.dns {
        let idx = model.dn_resource_indices(dn.id);
        let rs: Vec<_> = idx.iter().map(|&i| model.resources[i].clone()).collect();
        let w = weights(&rs, rule).unwrap();
        out.extend(compute_envelopes(method, dn, &rs, &w, polygon).unwrap());
    }
    out
}

#[test]
fn cost_ordering_and_safety_on_sampled_markets() {
    for set in [1u8, 2] {
        let cfg = ScenarioConfig::case_set(set);
        let bundle = load_bundle(&cfg).unwrap();
        for index in 0..6 {
            let model = sample_scenario(&bundle, &cfg, index).unwrap().model;
            let free = clear_no_dn(&model).unwrap();
            let full = clear_full_dn(&model, &bundle.polygon).unwrap();
            let rel = |c: f64| TOL * (1.0 + c.abs());
            assert!(free.cost <= full.cost + rel(full.cost));
            assert_eq!(total_violations(&model, &full.cleared, TOL).unwrap().total(), 0, "set {set} instance {index}");
            for method in OeMethod::ALL {
                for rule in WeightRule::ALL {
                    let env = oe_for_all_dns(&model, &bundle.polygon, method, rule);
                    let sol = clear_oe(&model, &env).unwrap();
                    assert!(free.cost <= sol.cost + rel(sol.cost), "{method:?} {rule:?}");
                    // cleared activations stay inside their envelopes
                    for (r, p) in model.resources.iter().zip(&sol.cleared) {
                        if let Some(e) = env.iter().find(|e| e.resource == r.id) {
                            assert!(*p >= e.eps_min - TOL && *p <= e.eps_max + TOL);
                        }
                    }
                    if method == OeMethod::TwoStep {
                        // a safe dispatch is feasible for the coordinated market
                        assert!(full.cost <= sol.cost + rel(sol.cost), "{rule:?}");
                        assert_eq!(total_violations(&model, &sol.cleared, TOL).unwrap().total(), 0);
                    }
                }
            }
        }
    }
}

#[test]
fn clearing_balances_the_system() {
    let cfg = ScenarioConfig::case_set(1);
    let bundle = load_bundle(&cfg).unwrap();
    let model = sample_scenario(&bundle, &cfg, 0).unwrap().model;
    let sol = clear_no_dn(&model).unwrap();
    let base: f64 = model.tn.injection.iter().sum::<f64>() - model.dns.iter().map(|d| d.z0()).sum::<f64>();
    let act: f64 = sol.cleared.iter().sum();
    assert!((base + act).abs() < 1e-5, "imbalance {}", base + act);
}
