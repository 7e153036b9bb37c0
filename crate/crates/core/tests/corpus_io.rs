use proptest::prelude::*;
use xabsa::data_io::{corpus_to_string, enumerate_pairs, load_corpus, save_corpus, synth_corpus, DomainProfile};
use xabsa::{Corpus, DomainId, Example, Polarity, SentimentTuple, Split, Task};

fn corpus() -> impl Strategy<Value = Corpus> {
    let task = prop::sample::select(Task::ALL.to_vec());
    let split = prop::sample::select(vec![Split::Train, Split::Dev, Split::Test]);
    let sentences = prop::collection::vec(prop::collection::vec("[A-Za-z\"\\\\é,.]{1,6}", 1..10), 0..8);
    (task, split, sentences, any::<u64>()).prop_map(|(task, split, sentences, salt)| {
        let schema = task.schema();
        let examples = sentences
            .into_iter()
            .enumerate()
            .map(|(i, words)| {
                let n = words.len();
                let pick = |k: u64| words[((salt.rotate_left(k as u32 * 7) ^ i as u64) as usize) % n].clone();
                let tuples: Vec<SentimentTuple> = (0..(salt as usize + i) % 3)
                    .map(|k| {
                        SentimentTuple::new(
                            &pick(2 * k as u64),
                            schema.requires_opinion.then(|| pick(2 * k as u64 + 1)).as_deref(),
                            schema.requires_polarity.then_some(Polarity::ALL[k % 3]),
                        )
                        .unwrap()
                    })
                    .collect();
                Example::from_tokens(words, tuples).unwrap()
            })
            .collect();
        Corpus::new(DomainId::new("dom"), task, split, true, examples).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn save_then_load_is_identity(c in corpus()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        save_corpus(&path, &c).unwrap();
        let back = load_corpus(&path, c.task).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(corpus_to_string(&back).unwrap(), corpus_to_string(&c).unwrap());
    }
}

#[test]
fn synthetic_corpora_round_trip() {
    let (p, q) = DomainProfile::builtin_pair(0.25);
    let dir = tempfile::tempdir().unwrap();
    for task in Task::ALL {
        for (profile, seed) in [(&p, 1), (&q, 2)] {
            let c = synth_corpus(profile, task, 150, seed).unwrap();
            let path = dir.path().join(format!("{}-{task}.jsonl", profile.name));
            save_corpus(&path, &c).unwrap();
            assert_eq!(load_corpus(&path, task).unwrap(), c);
            save_corpus(&path, &c).unwrap();
            assert_eq!(load_corpus(&path, task).unwrap(), c);
        }
    }
}

#[test]
fn pair_enumeration_is_stable() {
    for task in Task::ALL {
        let a = enumerate_pairs(task);
        assert_eq!(a, enumerate_pairs(task));
        assert!(a.iter().all(|p| p.source != p.target && p.task == task));
    }
    let labels: Vec<String> = enumerate_pairs(Task::Aste).iter().map(|p| p.label()).collect();
    assert_eq!(labels, ["R14→L14", "R15→L14", "R16→L14", "L14→R14", "L14→R15", "L14→R16"]);
    let ate: Vec<String> = enumerate_pairs(Task::Ate).iter().map(|p| p.label()).collect();
    assert_eq!(ate.len(), 10);
    assert!(ate.contains(&"S→R".to_owned()) && !ate.contains(&"D→L".to_owned()) && !ate.contains(&"L→D".to_owned()));
}
