mod common;

use common::*;
use kgpath::agent::build_state;
use kgpath::kg::Node;
use kgpath::nn::masked_softmax;
use ndarray::Array1;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn logits_and_mask() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (1usize..24).prop_flat_map(|n| {
        (
            prop::collection::vec(-200.0f64..200.0, n),
            prop::collection::vec(any::<bool>(), n),
            0..n,
        )
            .prop_map(|(l, mut m, forced)| {
                m[forced] = true;
                (l, m)
            })
    })
}

proptest! {
    #[test]
    fn sums_to_one_and_respects_the_mask((logits, mask) in logits_and_mask()) {
        let p = masked_softmax(Array1::from(logits).view(), &mask).unwrap();
        prop_assert!((p.sum() - 1.0).abs() < 1e-9);
        for (v, keep) in p.iter().zip(&mask) {
            prop_assert!(*v >= 0.0);
            if !keep {
                prop_assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn shift_invariant((logits, mask) in logits_and_mask(), shift in -500.0f64..500.0) {
        let a = masked_softmax(Array1::from(logits.clone()).view(), &mask).unwrap();
        let shifted: Array1<f64> = logits.iter().map(|x| x + shift).collect();
        let b = masked_softmax(shifted.view(), &mask).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn masked_entries_do_not_matter((logits, mask) in logits_and_mask(), junk in -1e6f64..1e6) {
        let a = masked_softmax(Array1::from(logits.clone()).view(), &mask).unwrap();
        let changed: Array1<f64> = logits.iter().zip(&mask).map(|(&x, &k)| if k { x } else { junk }).collect();
        let b = masked_softmax(changed.view(), &mask).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn random_policies_are_distributions_on_the_mask() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..1000 {
        let kg = random_kg(&mut rng, 10);
        let emb = random_embeddings(&mut rng, &kg, 3, 4);
        let agent = random_agent(&mut rng, &kg, 3, 6);
        let links = random_links(&mut rng, &kg);
        let code = random_code(&mut rng, 3);
        let state = build_state(&emb, kg.relation_count(), code.view(), Node::Patient, None).unwrap();
        let mut mask = vec![false; kg.entity_count()];
        for l in &links {
            mask[l.0] = true;
        }
        let (p, v) = agent.policy_value(&state, &mask).unwrap();
        assert!((p.sum() - 1.0).abs() < 1e-9);
        assert!(v.is_finite());
        for (x, keep) in p.iter().zip(&mask) {
            if !keep {
                assert_eq!(*x, 0.0);
            }
        }
    }
}
