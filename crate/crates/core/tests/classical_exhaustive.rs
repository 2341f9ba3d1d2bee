use qcr_core::classical::{
    check_cmc, do_distribution, enumerate_distribution, mutilate, mutual_information, xor_collider, FunctionalModel,
    Mechanism, CLASSICAL_TOL,
};
use qcr_core::graph::CausalDag;

/// Noise distribution used for two-valued noise; deliberately non-uniform.
const NOISE2: [f64; 2] = [0.375, 0.625];

/// All mechanisms for a binary node with `n_parents` binary parents and 1 or 2 noise values.
fn mechanisms(parents: &[String]) -> Vec<Mechanism> {
    let configs = 1usize << parents.len();
    let mut out = Vec::new();
    for noise in [vec![1.0], NOISE2.to_vec()] {
        let cells = configs * noise.len();
        for f in 0u32..(1 << cells) {
            let table = (0..configs)
                .map(|c| (0..noise.len()).map(|e| (f >> (c * noise.len() + e) & 1) as usize).collect())
                .collect();
            out.push(Mechanism { parents: parents.to_vec(), noise: noise.clone(), table });
        }
    }
    out
}

/// Every binary functional model on `n` nodes whose edges respect the order N0 < N1 < ...
fn for_each_model(n: usize, mut f: impl FnMut(&FunctionalModel)) {
    let names: Vec<String> = (0..n).map(|i| format!("N{i}")).collect();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    for mask in 0u32..(1 << pairs.len()) {
        let edges: Vec<(&str, &str)> = (0..pairs.len())
            .filter(|&k| mask >> k & 1 == 1)
            .map(|k| (names[pairs[k].0].as_str(), names[pairs[k].1].as_str()))
            .collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let dag = CausalDag::uniform(&refs, &edges, 2).unwrap();
        let options: Vec<Vec<Mechanism>> = (0..n)
            .map(|i| {
                let ps: Vec<String> = dag.parents(i).iter().map(|&p| names[p].clone()).collect();
                mechanisms(&ps)
            })
            .collect();
        let mut choice = vec![0; n];
        loop {
            let mechs = (0..n).map(|i| options[i][choice[i]].clone()).collect();
            f(&FunctionalModel::new(dag.clone(), mechs).unwrap());
            let mut k = 0;
            while k < n {
                choice[k] += 1;
                if choice[k] < options[k].len() {
                    break;
                }
                choice[k] = 0;
                k += 1;
            }
            if k == n {
                break;
            }
        }
    }
}

#[test]
fn cmc_and_mutilation_on_all_small_models() {
    let mut models = 0;
    let mut interventions = 0;
    let mut undefined = 0;
    for n in 1..=3 {
        for_each_model(n, |fm| {
            models += 1;
            let t = enumerate_distribution(fm).unwrap();
            assert!(t.is_normalized(CLASSICAL_TOL));
            let r = check_cmc(&t, fm.dag()).unwrap();
            assert!(r.ok, "{fm:?}: {r:?}");
            for node in fm.dag().nodes() {
                for v in 0..2 {
                    let mutilated = enumerate_distribution(&mutilate(fm, &node.id, v).unwrap()).unwrap();
                    // Without positivity some parent configuration reached under do() was never
                    // observed; the table alone cannot supply its conditional, so that must be an error.
                    match do_distribution(&t, fm.dag(), &node.id, v) {
                        Ok(d) => {
                            assert!(d.max_abs_diff(&mutilated).unwrap() < CLASSICAL_TOL);
                            interventions += 1;
                        }
                        Err(_) => {
                            assert!(t.min_entry() == 0.0, "{fm:?} do({}={v})", node.id);
                            undefined += 1;
                        }
                    }
                }
            }
        });
    }
    assert!(models > 30_000, "{models}");
    assert!(interventions > 100_000, "{interventions}");
    assert!(undefined > 0);
}

#[test]
fn berkson_asymmetry() {
    let fm = xor_collider();
    let t = enumerate_distribution(&fm).unwrap();
    let conditioned = mutual_information(&t, "V1", "V2", &[("V3", 0)]).unwrap();
    let intervened = do_distribution(&t, fm.dag(), "V3", 0).unwrap();
    let under_do = mutual_information(&intervened, "V1", "V2", &[]).unwrap();
    assert!(conditioned > 0.05);
    assert_eq!(under_do, 0.0);
}
