use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xabsa::decoding::{argmax, constrained_generate, free_generate, greedy, ConstraintSet};
use xabsa::model::{Control, EpochEnd, FitReport, Seq2SeqModel, SeqPair, ToyBackbone, ToyConfig, TokenId, TrainConfig, Vocab, EOS_ID};
use xabsa::tagging::TaggedSequence;
use xabsa::{Error, Result, Task};

/// Scores from a fixed table indexed by decoding step; the last row repeats.
#[derive(Clone)]
struct Table {
    vocab: Vocab,
    rows: Vec<Vec<f32>>,
}

impl Table {
    fn row(&self, step: usize) -> Vec<f32> {
        self.rows[step.min(self.rows.len() - 1)].clone()
    }
}

impl Seq2SeqModel for Table {
    type State = (usize, Vec<f32>);

    fn vocab(&self) -> &Vocab {
        &self.vocab
    }
    fn max_len(&self) -> usize {
        128
    }
    fn fresh(&self) -> Self {
        self.clone()
    }
    fn begin(&self, _: &[TokenId]) -> Result<Self::State> {
        Ok((0, self.row(0)))
    }
    fn scores<'s>(&self, state: &'s Self::State) -> &'s [f32] {
        &state.1
    }
    fn advance(&self, state: &mut Self::State, _: TokenId) -> Result<()> {
        state.0 += 1;
        state.1 = self.row(state.0);
        Ok(())
    }
    fn fit_observed(&mut self, _: &[SeqPair], _: &TrainConfig, _: &mut dyn FnMut(&Self, EpochEnd) -> Control) -> Result<FitReport> {
        Err(Error::Config("fixed model".into()))
    }
}

/// Wraps a model and multiplies every score by a positive constant.
#[derive(Clone)]
struct Scaled {
    inner: ToyBackbone,
    factor: f32,
}

impl Seq2SeqModel for Scaled {
    type State = (<ToyBackbone as Seq2SeqModel>::State, Vec<f32>);

    fn vocab(&self) -> &Vocab {
        self.inner.vocab()
    }
    fn max_len(&self) -> usize {
        self.inner.max_len()
    }
    fn fresh(&self) -> Self {
        self.clone()
    }
    fn begin(&self, source: &[TokenId]) -> Result<Self::State> {
        let s = self.inner.begin(source)?;
        let scaled = self.scale(&s);
        Ok((s, scaled))
    }
    fn scores<'s>(&self, state: &'s Self::State) -> &'s [f32] {
        &state.1
    }
    fn advance(&self, state: &mut Self::State, token: TokenId) -> Result<()> {
        self.inner.advance(&mut state.0, token)?;
        state.1 = self.scale(&state.0);
        Ok(())
    }
    fn fit_observed(&mut self, _: &[SeqPair], _: &TrainConfig, _: &mut dyn FnMut(&Self, EpochEnd) -> Control) -> Result<FitReport> {
        Err(Error::Config("wrapper".into()))
    }
}

impl Scaled {
    fn scale(&self, s: &<ToyBackbone as Seq2SeqModel>::State) -> Vec<f32> {
        self.inner.scores(s).iter().map(|x| x * self.factor).collect()
    }
}

fn random_vocab(rng: &mut ChaCha8Rng) -> (Vocab, Vec<String>) {
    let words: Vec<String> = (0..rng.gen_range(3..30)).map(|i| format!("w{i}")).collect();
    (Vocab::from_words(words.iter().map(String::as_str)), words)
}

#[test]
fn constrained_outputs_stay_inside_the_allowed_set() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for case in 0..150 {
        let (vocab, words) = random_vocab(&mut rng);
        let model = ToyBackbone::new(
            vocab.clone(),
            ToyConfig { embed_dim: 6, encoder_hidden: 5, decoder_hidden: 7, init_scale: rng.gen_range(0.1..3.0), max_len: 32, seed: case },
        );
        let task = Task::ALL[rng.gen_range(0..4)];
        let sentence: Vec<&str> = (0..rng.gen_range(1..10)).map(|_| words[rng.gen_range(0..words.len())].as_str()).collect();
        let max_len = rng.gen_range(1..20);
        let ids = vocab.encode(&sentence);
        let allowed = ConstraintSet::for_sentence(&vocab, &ids, task);
        let out = greedy(&model, &ids, Some(&allowed), max_len).unwrap();
        assert!(out.len() <= max_len);
        assert!(out.iter().all(|&t| allowed.contains(t) && t != EOS_ID));
        let label = constrained_generate(&model, &sentence, task, max_len).unwrap();
        assert_eq!(label.tokens(), vocab.decode(&out).as_slice());
        let free = free_generate(&model, &label, max_len).unwrap();
        assert!(free.len() <= max_len);
    }
}

#[test]
fn best_allowed_token_wins_when_top_is_outside() {
    let vocab = Vocab::from_words(["the", "apple", "pear"]);
    let pear = vocab.id("pear").unwrap();
    let apple = vocab.id("apple").unwrap();
    let aspect = vocab.id("<aspect>").unwrap();
    let mut first = vec![0.0f32; vocab.len()];
    first[pear] = 10.0;
    first[aspect] = 5.0;
    first[apple] = 4.0;
    let mut second = vec![0.0f32; vocab.len()];
    second[pear] = 10.0;
    second[apple] = 6.0;
    let mut third = vec![0.0f32; vocab.len()];
    third[EOS_ID] = 1.0;
    let m = Table { vocab, rows: vec![first, second, third] };
    let out = constrained_generate(&m, &["the", "apple"], Task::Ate, 10).unwrap();
    assert_eq!(out.to_string(), "<aspect> apple");
    let free = free_generate(&m, &TaggedSequence::empty_label(Task::Ate), 10).unwrap();
    assert_eq!(free, ["pear", "pear"]);
}

#[test]
fn generation_stops_at_max_len_without_an_end_marker() {
    let vocab = Vocab::from_words(["a"]);
    let mut row = vec![0.0f32; vocab.len()];
    row[vocab.id("a").unwrap()] = 1.0;
    let m = Table { vocab, rows: vec![row] };
    assert_eq!(constrained_generate(&m, &["a"], Task::Ate, 7).unwrap().tokens().len(), 7);
    assert_eq!(free_generate(&m, &TaggedSequence::empty_label(Task::Ate), 5).unwrap().len(), 5);
    assert!(greedy(&m, &[], None, 0).unwrap().is_empty());
}

#[test]
fn full_constraint_equals_free_decoding() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..40 {
        let (vocab, _) = random_vocab(&mut rng);
        let m = ToyBackbone::new(vocab.clone(), ToyConfig { embed_dim: 6, encoder_hidden: 5, decoder_hidden: 7, init_scale: 2.0, max_len: 32, seed });
        let src: Vec<TokenId> = (0..rng.gen_range(0..8)).map(|_| rng.gen_range(0..vocab.len())).collect();
        let full = ConstraintSet::full(&vocab);
        assert_eq!(greedy(&m, &src, Some(&full), 16).unwrap(), greedy(&m, &src, None, 16).unwrap());
    }
}

#[test]
fn positive_scaling_leaves_outputs_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..30 {
        let (vocab, words) = random_vocab(&mut rng);
        let inner = ToyBackbone::new(vocab.clone(), ToyConfig { embed_dim: 6, encoder_hidden: 5, decoder_hidden: 7, init_scale: 2.0, max_len: 32, seed });
        let scaled = Scaled { inner: inner.clone(), factor: rng.gen_range(0.1..10.0) };
        let sentence: Vec<&str> = (0..rng.gen_range(1..8)).map(|_| words[rng.gen_range(0..words.len())].as_str()).collect();
        let task = Task::ALL[seed as usize % 4];
        let a = constrained_generate(&inner, &sentence, task, 16).unwrap();
        assert_eq!(a, constrained_generate(&scaled, &sentence, task, 16).unwrap());
        assert_eq!(free_generate(&inner, &a, 16).unwrap(), free_generate(&scaled, &a, 16).unwrap());
    }
}

#[test]
fn argmax_ties_go_to_the_lowest_id() {
    assert_eq!(argmax(&[1.0, 3.0, 3.0, 3.0], None), 1);
    let vocab = Vocab::from_words(["x", "y"]);
    let set = ConstraintSet::for_sentence(&vocab, &vocab.encode(&["y"]), Task::Ate);
    let scores = vec![0.0f32; vocab.len()];
    assert_eq!(argmax(&scores, Some(&set)), EOS_ID);
}

#[test]
fn constraint_set_always_has_the_end_marker() {
    for task in Task::ALL {
        let vocab = Vocab::new();
        let set = ConstraintSet::for_sentence(&vocab, &[], task);
        assert!(set.contains(EOS_ID));
        assert!(set.iter().all(|t| t < vocab.len()));
    }
}
