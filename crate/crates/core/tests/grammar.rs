use proptest::prelude::*;
use xabsa::tagging::{parse, parse_tokens, serialize, tagger_vocabulary, TaggedSequence};
use xabsa::{Polarity, SentimentTuple, Task, TupleSet};

const MARKERS: [&str; 6] = ["<aspect>", "<opinion>", "<pos>", "<neu>", "<neg>", "<none>"];

fn span() -> impl Strategy<Value = String> {
    prop::collection::vec("[a-z]{1,5}", 1..4).prop_map(|w| w.join(" "))
}

fn polarity() -> impl Strategy<Value = Polarity> {
    prop::sample::select(Polarity::ALL.to_vec())
}

fn tuple(task: Task) -> impl Strategy<Value = SentimentTuple> {
    let schema = task.schema();
    (span(), span(), polarity()).prop_map(move |(a, o, p)| {
        SentimentTuple::new(
            &a,
            schema.requires_opinion.then_some(o.as_str()),
            schema.requires_polarity.then_some(p),
        )
        .unwrap()
    })
}

fn task_and_set() -> impl Strategy<Value = (Task, TupleSet)> {
    prop::sample::select(Task::ALL.to_vec()).prop_flat_map(|task| {
        (Just(task), prop::collection::vec(tuple(task), 0..5).prop_map(TupleSet::from_tuples))
    })
}

#[derive(Debug, Clone)]
enum Mutation {
    Delete(usize),
    Insert(usize, String),
    SwapNext(usize),
    Replace(usize, String),
}

fn mutation() -> impl Strategy<Value = Mutation> {
    let token = prop_oneof![
        prop::sample::select(MARKERS.to_vec()).prop_map(String::from),
        "[a-z]{1,5}",
        Just("</s>".to_owned()),
    ];
    prop_oneof![
        any::<usize>().prop_map(Mutation::Delete),
        (any::<usize>(), token.clone()).prop_map(|(i, t)| Mutation::Insert(i, t)),
        any::<usize>().prop_map(Mutation::SwapNext),
        (any::<usize>(), token).prop_map(|(i, t)| Mutation::Replace(i, t)),
    ]
}

fn apply(tokens: &[String], m: &Mutation) -> Vec<String> {
    let mut out = tokens.to_vec();
    let n = out.len();
    match m {
        Mutation::Delete(i) => {
            out.remove(i % n);
        }
        Mutation::Insert(i, t) => out.insert(i % (n + 1), t.clone()),
        Mutation::SwapNext(i) if n > 1 => out.swap(i % (n - 1), i % (n - 1) + 1),
        Mutation::SwapNext(_) => {}
        Mutation::Replace(i, t) => out[i % n] = t.clone(),
    }
    out
}

proptest! {
    #[test]
    fn serialize_then_parse_is_identity((task, set) in task_and_set()) {
        let seq = serialize(&set, task).unwrap();
        prop_assert_eq!(seq.parse().unwrap(), set.clone());
        prop_assert_eq!(parse(&seq.to_string(), task).unwrap(), set);
    }

    #[test]
    fn serialized_markers_belong_to_the_task((task, set) in task_and_set()) {
        let seq = serialize(&set, task).unwrap();
        let allowed = tagger_vocabulary(task);
        for tok in seq.tokens().iter().filter(|t| t.starts_with('<')) {
            prop_assert!(allowed.contains(&tok.as_str()), "{} not in {:?}", tok, allowed);
        }
    }

    #[test]
    fn mutations_never_parse_to_the_same_set((task, set) in task_and_set(), m in mutation()) {
        let seq = serialize(&set, task).unwrap();
        let mutated = apply(seq.tokens(), &m);
        prop_assume!(mutated != seq.tokens());
        if let Ok(parsed) = parse_tokens(&mutated, task) {
            prop_assert!(!parsed.same_set(&set), "{:?} -> {:?} still parses to {}", seq.tokens(), mutated, set);
        }
    }

    #[test]
    fn parse_is_total_and_stable(
        task in prop::sample::select(Task::ALL.to_vec()),
        tokens in prop::collection::vec(prop_oneof![
            prop::sample::select(MARKERS.to_vec()).prop_map(String::from),
            "[a-c]{1,2}",
        ], 0..12),
    ) {
        if let Ok(set) = parse_tokens(&tokens, task) {
            prop_assert!(set.conforms(task.schema()));
            let again = serialize(&set, task).unwrap().parse().unwrap();
            prop_assert_eq!(again, set);
        }
    }

    #[test]
    fn nonconforming_tuples_are_not_serialized((task, set) in task_and_set(), other in prop::sample::select(Task::ALL.to_vec())) {
        prop_assume!(task.schema() != other.schema() && !set.is_empty());
        prop_assert!(serialize(&set, other).is_err());
    }
}

#[test]
fn empty_set_is_the_sentinel() {
    for task in Task::ALL {
        let seq = serialize(&TupleSet::new(), task).unwrap();
        assert_eq!(seq, TaggedSequence::empty_label(task));
        assert!(seq.parse().unwrap().is_empty());
    }
}
