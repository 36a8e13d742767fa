//! Property tests over random networks, masks and assignments.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use um_core::{
    apply_mask, brute_force_marginals, exact_conditional_marginals, generate_random_network,
    Assignment, Evidence, LayerSizes, Mask, NoisyOrNetwork, ParamRanges,
};

fn arb_network() -> impl Strategy<Value = NoisyOrNetwork> {
    (1usize..=3, 1usize..=3, 1usize..=3, 0u64..1000, 2u32..=10).prop_map(
        |(r, d, s, seed, edge10)| {
            generate_random_network(
                seed,
                LayerSizes::new(r, d, s).unwrap(),
                f64::from(edge10) / 10.0,
                &ParamRanges::default(),
            )
            .unwrap()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn joint_probability_is_positive_everywhere(net in arb_network(), code in any::<u32>()) {
        let values: Vec<bool> = (0..net.n()).map(|i| code >> (i % 32) & 1 == 1).collect();
        let p = net.joint_probability(&Assignment::new(values)).unwrap();
        prop_assert!(p > 0.0);
        prop_assert!(p <= 1.0);
    }

    #[test]
    fn markov_blanket_symmetry(net in arb_network()) {
        for x in 0..net.n() {
            let mb = net.markov_blanket(x).unwrap();
            prop_assert!(!mb.contains(&x));
            for &y in &mb {
                prop_assert!(net.markov_blanket(y).unwrap().contains(&x));
            }
        }
    }

    #[test]
    fn cpd_depends_only_on_parents(net in arb_network(), seed in any::<u64>()) {
        // Toggling any non-parent never changes a conditional.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = net.ancestral_sample(&mut rng);
        let rf: Vec<bool> = a.as_slice()[..net.num_risk_factors()].to_vec();
        for i in 0..net.num_diseases() {
            let d = net.disease_global(i);
            let base = net.prob_disease_false_given_parents(d, &rf).unwrap();
            let parents: Vec<usize> = net.disease_parents(i).iter().map(|&(j, _)| j).collect();
            for j in 0..net.num_risk_factors() {
                if !parents.contains(&j) {
                    let mut toggled = rf.clone();
                    toggled[j] = !toggled[j];
                    prop_assert_eq!(
                        net.prob_disease_false_given_parents(d, &toggled).unwrap(),
                        base
                    );
                }
            }
        }
    }

    #[test]
    fn encoded_samples_never_carry_the_illegal_pattern(
        bits in proptest::collection::vec(any::<(bool, bool)>(), 1..40)
    ) {
        let assignment = Assignment::new(bits.iter().map(|&(a, _)| a).collect());
        let mask = Mask::new(bits.iter().map(|&(_, b)| b).collect());
        let encoded = apply_mask(&assignment, &mask).unwrap();
        prop_assert!(encoded.is_valid_encoding());
        // Observed count equals the mask size.
        let observed = (0..encoded.num_nodes())
            .filter(|&i| encoded.node_code(i) != (0.0, 0.0))
            .count();
        prop_assert_eq!(observed, mask.size());
    }

    #[test]
    fn observed_marginals_echo_their_evidence(net in arb_network(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sample = net.ancestral_sample(&mut rng);
        let items: Vec<(usize, bool)> = (0..net.n())
            .step_by(2)
            .map(|i| (i, sample.get(i)))
            .collect();
        let ev = Evidence::new(items.clone()).unwrap();
        let exact = exact_conditional_marginals(&net, &ev).unwrap();
        for (i, v) in items {
            prop_assert_eq!(exact.get(i), if v { 1.0 } else { 0.0 });
        }
        // Every unobserved entry is a probability.
        for i in 0..net.n() {
            prop_assert!((0.0..=1.0).contains(&exact.get(i)));
        }
    }

    #[test]
    fn exact_agrees_with_brute_force(net in arb_network(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sample = net.ancestral_sample(&mut rng);
        let items: Vec<(usize, bool)> = (0..net.n())
            .step_by(3)
            .map(|i| (i, sample.get(i)))
            .collect();
        let ev = Evidence::new(items).unwrap();
        let exact = exact_conditional_marginals(&net, &ev).unwrap();
        let brute = brute_force_marginals(&net, &ev).unwrap();
        for i in 0..net.n() {
            prop_assert!((exact.get(i) - brute.get(i)).abs() < 1e-10);
        }
    }
}
