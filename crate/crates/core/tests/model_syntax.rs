use pathmed::model_dsl::{classify_roles, parse_model, render_model, ModelError, VariableRole};
use proptest::prelude::*;

/// A random acyclic model over `V0..Vk`: each variable may regress on any
/// variable earlier in a shuffled order; exogenous pairs may covary.
fn acyclic_model() -> impl Strategy<Value = String> {
    (2usize..7)
        .prop_flat_map(|k| {
            (
                Just(k),
                Just((0..k).collect::<Vec<_>>()).prop_shuffle(),
                prop::collection::vec(prop::collection::vec(any::<bool>(), k), k),
                prop::collection::vec(any::<bool>(), k * k),
                any::<bool>(),
            )
        })
        .prop_filter_map("model must have a statement", |(k, order, edges, cov, semi)| {
            let name = |i: usize| format!("V{}", order[i]);
            let mut lines = Vec::new();
            let mut exo = Vec::new();
            for j in 0..k {
                let preds: Vec<String> = (0..j).filter(|&i| edges[j][i]).map(name).collect();
                if preds.is_empty() {
                    exo.push(j);
                } else {
                    lines.push(format!("{} ~ {}", name(j), preds.join(" + ")));
                }
            }
            let mentioned: Vec<usize> = exo.clone();
            for (a, &i) in mentioned.iter().enumerate() {
                for &j in &mentioned[a + 1..] {
                    if cov[i * k + j] {
                        lines.push(format!("{} ~~ {}", name(i), name(j)));
                    }
                }
            }
            if lines.is_empty() {
                return None;
            }
            let sep = if semi { "; " } else { "\n" };
            Some(format!("# generated\n{}\n", lines.join(sep)))
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn render_then_parse_is_identity(text in acyclic_model()) {
        let spec = parse_model(&text).unwrap();
        let rendered = render_model(&spec);
        let again = parse_model(&rendered).unwrap();
        prop_assert_eq!(&spec, &again);
        prop_assert_eq!(render_model(&again), rendered);
    }

    #[test]
    fn roles_follow_path_structure(text in acyclic_model()) {
        let spec = parse_model(&text).unwrap();
        let roles = classify_roles(&spec);
        for v in &spec.variables {
            let is_outcome = spec.regressions.iter().any(|r| &r.outcome == v);
            let is_predictor = spec.regressions.iter().any(|r| r.predictors.contains(v));
            let expected = match (is_outcome, is_predictor) {
                (false, _) => VariableRole::Exogenous,
                (true, true) => VariableRole::Mediator,
                (true, false) => VariableRole::Endogenous,
            };
            prop_assert_eq!(roles.get(v), Some(expected));
        }
    }

    #[test]
    fn back_edge_creates_cycle(text in acyclic_model()) {
        let spec = parse_model(&text).unwrap();
        // Close a loop from the first outcome back into one of its predictors'
        // ancestry: predictor ~ outcome.
        if let Some(r) = spec.regressions.first() {
            let p = &r.predictors[0];
            let closed = format!("{text}{p} ~ {}\n", r.outcome);
            prop_assert!(matches!(parse_model(&closed), Err(ModelError::Cycle(_))));
        }
    }
}

#[test]
fn statement_separators_and_comments_are_equivalent() {
    let a = parse_model("M ~ X\nY ~ X + M\n").unwrap();
    let b = parse_model("M ~ X; Y ~ X   # direct\nY ~ M").unwrap();
    assert_eq!(a, b);
}
