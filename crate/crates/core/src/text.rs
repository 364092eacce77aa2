//! Text features: tokenization, an add-one n-gram language model, sentence
//! BLEU, lexicon sentiment, and bag-of-words / TF-IDF encoders.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_properties::{GeneralCategoryGroup, UnicodeGeneralCategory};

use crate::data::Item;
use crate::error::{Error, Result};
use crate::ml::Matrix;

/// Stopword list bundled with the crate.
pub const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");
/// Small sample valence lexicon bundled with the crate.
pub const DEFAULT_LEXICON: &str = include_str!("../data/sentiment_lexicon.tsv");

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

fn is_punctuation(c: char) -> bool {
    c.general_category_group() == GeneralCategoryGroup::Punctuation
}

/// Lowercases, deletes Unicode punctuation and splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .filter(|c| !is_punctuation(*c))
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Whitespace-separated words in the raw text.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Word n-gram model with add-one smoothing.
///
/// Sentences are padded with `order - 1` start symbols and one end symbol.
/// The predicted vocabulary is the training types plus the end symbol and an
/// unknown bucket; tokens seen fewer than `min_count` times in training are
/// folded into the unknown bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramLM {
    order: usize,
    min_count: usize,
    vocab: BTreeSet<String>,
    ngrams: HashMap<Vec<String>, u64>,
    contexts: HashMap<Vec<String>, u64>,
    trained: bool,
}

impl NgramLM {
    pub fn new(order: usize) -> Result<Self> {
        Self::with_min_count(order, 1)
    }

    pub fn with_min_count(order: usize, min_count: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidParameter("n-gram order must be >= 1".into()));
        }
        Ok(NgramLM {
            order,
            min_count: min_count.max(1),
            vocab: BTreeSet::new(),
            ngrams: HashMap::new(),
            contexts: HashMap::new(),
            trained: false,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    /// Number of predicted outcomes, including the end symbol and unknown bucket.
    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Fits on `corpus`, one sentence per entry. Replaces earlier training.
    pub fn train<S: AsRef<str>>(&mut self, corpus: &[S]) -> Result<()> {
        let sentences: Vec<Vec<String>> = corpus
            .iter()
            .map(|s| tokenize(s.as_ref()))
            .filter(|t| !t.is_empty())
            .collect();
        if sentences.is_empty() {
            return Err(Error::InvalidInput("language model corpus is empty".into()));
        }
        let mut freq: HashMap<&str, usize> = HashMap::new();
        for tok in sentences.iter().flatten() {
            *freq.entry(tok).or_default() += 1;
        }
        self.vocab = freq
            .iter()
            .filter(|(_, c)| **c >= self.min_count)
            .map(|(t, _)| t.to_string())
            .collect();
        self.vocab.insert(EOS.to_string());
        self.vocab.insert(UNK.to_string());
        self.ngrams.clear();
        self.contexts.clear();
        for sentence in &sentences {
            let padded = self.pad(sentence);
            for window in padded.windows(self.order) {
                *self.ngrams.entry(window.to_vec()).or_default() += 1;
                *self.contexts.entry(window[..self.order - 1].to_vec()).or_default() += 1;
            }
        }
        self.trained = true;
        Ok(())
    }

    fn pad(&self, tokens: &[String]) -> Vec<String> {
        let mut padded = vec![BOS.to_string(); self.order - 1];
        padded.extend(tokens.iter().map(|t| {
            if self.vocab.contains(t) && t != EOS && t != UNK {
                t.clone()
            } else {
                UNK.to_string()
            }
        }));
        padded.push(EOS.to_string());
        padded
    }

    /// `P(token | context)` with add-one smoothing over the predicted vocabulary.
    pub fn prob(&self, context: &[String], token: &str) -> Result<f64> {
        if !self.trained {
            return Err(Error::NotReady("language model is not trained"));
        }
        if context.len() != self.order - 1 {
            return Err(Error::InvalidInput(format!(
                "context has {} tokens, model order {} needs {}",
                context.len(),
                self.order,
                self.order - 1
            )));
        }
        let token = if self.vocab.contains(token) { token } else { UNK };
        let mut key = context.to_vec();
        key.push(token.to_string());
        let joint = self.ngrams.get(&key).copied().unwrap_or(0) as f64;
        let ctx = self.contexts.get(context).copied().unwrap_or(0) as f64;
        Ok((joint + 1.0) / (ctx + self.vocab.len() as f64))
    }

    /// Sum of `ln P` over the sentence and the number of predicted tokens.
    fn log_prob(&self, text: &str) -> Result<(f64, usize)> {
        if !self.trained {
            return Err(Error::NotReady("language model is not trained"));
        }
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(Error::InvalidInput("perplexity of empty text".into()));
        }
        let padded = self.pad(&tokens);
        let mut total = 0.0;
        for window in padded.windows(self.order) {
            let (ctx, tok) = window.split_at(self.order - 1);
            total += self.prob(ctx, &tok[0])?.ln();
        }
        Ok((total, padded.len() + 1 - self.order))
    }

    /// `exp(-(1/N) sum ln p)` over the sentence tokens and the end symbol.
    pub fn perplexity(&self, text: &str) -> Result<f64> {
        let (lp, n) = self.log_prob(text)?;
        Ok((-lp / n as f64).exp())
    }

    /// Perplexity of several sentences pooled into one token stream.
    pub fn corpus_perplexity<S: AsRef<str>>(&self, texts: &[S]) -> Result<f64> {
        let mut lp = 0.0;
        let mut n = 0;
        for t in texts {
            let (l, c) = self.log_prob(t.as_ref())?;
            lp += l;
            n += c;
        }
        if n == 0 {
            return Err(Error::InvalidInput("perplexity of empty corpus".into()));
        }
        Ok((-lp / n as f64).exp())
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for w in tokens.windows(n) {
        *counts.entry(w).or_default() += 1;
    }
    counts
}

/// Sentence BLEU with n = 1..4, uniform weights and brevity penalty.
///
/// Precisions for n >= 2 get add-one smoothing on numerator and denominator.
/// Unigram precision is left raw, so a candidate sharing no word with the
/// reference scores 0.
pub fn bleu(reference: &str, candidate: &str) -> Result<f64> {
    let r = tokenize(reference);
    let c = tokenize(candidate);
    if r.is_empty() || c.is_empty() {
        return Err(Error::InvalidInput("BLEU needs nonempty texts".into()));
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let cand = ngram_counts(&c, n);
        let refs = ngram_counts(&r, n);
        let matched: usize = cand
            .iter()
            .map(|(g, k)| (*k).min(refs.get(g).copied().unwrap_or(0)))
            .sum();
        let total = c.len().saturating_sub(n - 1);
        let p = if n == 1 {
            matched as f64 / total as f64
        } else {
            (matched as f64 + 1.0) / (total as f64 + 1.0)
        };
        if p == 0.0 {
            return Ok(0.0);
        }
        log_sum += 0.25 * p.ln();
    }
    let bp = if c.len() > r.len() {
        1.0
    } else {
        (1.0 - r.len() as f64 / c.len() as f64).exp()
    };
    Ok((bp * log_sum.exp()).clamp(0.0, 1.0))
}

/// Token valences for lexicon sentiment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    valences: HashMap<String, f64>,
}

/// Normalization constant of the compound score.
pub const SENTIMENT_ALPHA: f64 = 15.0;

impl Lexicon {
    /// Parses `token<TAB>valence` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut valences = HashMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (tok, val) = line.split_once('\t').ok_or_else(|| {
                Error::InvalidInput(format!("lexicon line {}: expected token<TAB>valence", no + 1))
            })?;
            let val: f64 = val.trim().parse().map_err(|_| {
                Error::InvalidInput(format!("lexicon line {}: bad valence {val:?}", no + 1))
            })?;
            valences.insert(tok.trim().to_lowercase(), val);
        }
        Ok(Lexicon { valences })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn bundled() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("bundled lexicon parses")
    }

    pub fn from_pairs<I: IntoIterator<Item = (String, f64)>>(pairs: I) -> Self {
        Lexicon {
            valences: pairs.into_iter().map(|(t, v)| (t.to_lowercase(), v)).collect(),
        }
    }

    pub fn valence(&self, token: &str) -> Option<f64> {
        self.valences.get(token).copied()
    }

    pub fn len(&self) -> usize {
        self.valences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valences.is_empty()
    }
}

/// `x / sqrt(x^2 + 15)` where `x` sums the valences of matched tokens.
pub fn sentiment(text: &str, lexicon: &Lexicon) -> f64 {
    let x: f64 = tokenize(text).iter().filter_map(|t| lexicon.valence(t)).sum();
    if x == 0.0 {
        return 0.0;
    }
    x / (x * x + SENTIMENT_ALPHA).sqrt()
}

/// The seven base features of one item.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub wc_premise: usize,
    pub wc_conclusion: usize,
    pub ppl_premise: f64,
    pub ppl_conclusion: f64,
    pub bleu_pc: f64,
    pub sent_premise: f64,
    pub sent_conclusion: f64,
}

impl FeatureVector {
    pub const NAMES: [&'static str; 7] = [
        "wc_premise",
        "wc_conclusion",
        "ppl_premise",
        "ppl_conclusion",
        "bleu_pc",
        "sent_premise",
        "sent_conclusion",
    ];

    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.wc_premise as f64,
            self.wc_conclusion as f64,
            self.ppl_premise,
            self.ppl_conclusion,
            self.bleu_pc,
            self.sent_premise,
            self.sent_conclusion,
        ]
    }
}

/// Metadata keys that override model perplexities.
pub const PPL_PREMISE_KEY: &str = "ppl_premise";
pub const PPL_CONCLUSION_KEY: &str = "ppl_conclusion";

/// Word counts, perplexities, premise-to-conclusion BLEU and sentiments.
///
/// Perplexities stored in item metadata take precedence over `lm`.
pub fn extract_base_features(item: &Item, lm: &NgramLM, lexicon: &Lexicon) -> Result<FeatureVector> {
    let ppl = |key: &str, text: &str| match item.metadata_f64(key) {
        Some(v) if v.is_finite() && v > 0.0 => Ok(v),
        Some(v) => Err(Error::InvalidInput(format!(
            "item `{}`: metadata {key} = {v} is not a positive perplexity",
            item.id
        ))),
        None => lm.perplexity(text),
    };
    Ok(FeatureVector {
        wc_premise: word_count(&item.premise),
        wc_conclusion: word_count(&item.conclusion),
        ppl_premise: ppl(PPL_PREMISE_KEY, &item.premise)?,
        ppl_conclusion: ppl(PPL_CONCLUSION_KEY, &item.conclusion)?,
        bleu_pc: bleu(&item.premise, &item.conclusion)?,
        sent_premise: sentiment(&item.premise, lexicon),
        sent_conclusion: sentiment(&item.conclusion, lexicon),
    })
}

pub fn parse_stopwords(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

pub fn load_stopwords(path: &Path) -> Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_stopwords(&text))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodeMode {
    Counts,
    TfIdf,
}

/// Bag-of-words or TF-IDF encoder with a vocabulary fixed at fit time.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    mode: EncodeMode,
    stopwords: BTreeSet<String>,
    vocab: Vec<String>,
    index: BTreeMap<String, usize>,
    idf: Vec<f64>,
}

impl Encoder {
    /// Learns a lexicographically ordered vocabulary (and idf weights) from `corpus`.
    pub fn fit<S: AsRef<str>>(corpus: &[S], mode: EncodeMode, stopwords: &BTreeSet<String>) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::InvalidInput("cannot fit an encoder on an empty corpus".into()));
        }
        let docs: Vec<Vec<String>> = corpus
            .iter()
            .map(|d| Self::terms(d.as_ref(), stopwords))
            .collect();
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for doc in &docs {
            for t in doc.iter().collect::<BTreeSet<_>>() {
                *df.entry(t.clone()).or_default() += 1;
            }
        }
        let n = docs.len() as f64;
        let vocab: Vec<String> = df.keys().cloned().collect();
        let idf = df
            .values()
            .map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0)
            .collect();
        let index = vocab.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(Encoder {
            mode,
            stopwords: stopwords.clone(),
            vocab,
            index,
            idf,
        })
    }

    fn terms(text: &str, stopwords: &BTreeSet<String>) -> Vec<String> {
        tokenize(text)
            .into_iter()
            .filter(|t| !stopwords.contains(t))
            .collect()
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocab
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    /// Encodes documents; terms outside the fitted vocabulary are dropped.
    pub fn transform<S: AsRef<str>>(&self, docs: &[S]) -> Matrix {
        let mut m = Matrix::zeros(docs.len(), self.vocab.len());
        for (r, doc) in docs.iter().enumerate() {
            let row = m.row_mut(r);
            for t in Self::terms(doc.as_ref(), &self.stopwords) {
                if let Some(&j) = self.index.get(&t) {
                    row[j] += 1.0;
                }
            }
            if self.mode == EncodeMode::TfIdf {
                for (v, w) in row.iter_mut().zip(&self.idf) {
                    *v *= w;
                }
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    row.iter_mut().for_each(|v| *v /= norm);
                }
            }
        }
        m
    }
}

/// Fits on `corpus` and encodes it.
pub fn encode<S: AsRef<str>>(
    corpus: &[S],
    mode: EncodeMode,
    stopwords: &BTreeSet<String>,
) -> Result<(Vec<String>, Matrix)> {
    let enc = Encoder::fit(corpus, mode, stopwords)?;
    let m = enc.transform(corpus);
    Ok((enc.vocab, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ItemType;
    use proptest::prelude::*;

    #[test]
    fn tokenizer_strips_unicode_punctuation() {
        assert_eq!(tokenize("Hello, World!  It’s «fine»…"), vec!["hello", "world", "its", "fine"]);
        assert_eq!(word_count("  one two\tthree\nfour five "), 5);
    }

    #[test]
    fn unigram_uniform_when_smoothing_is_exact() {
        // Every predicted bucket (a, b, <unk> from x/y, </s>) has count 2, so
        // add-one gives 3/12 = 1/4 for each.
        let mut lm = NgramLM::with_min_count(1, 2).unwrap();
        lm.train(&["a b x", "a b y"]).unwrap();
        assert_eq!(lm.vocab_size(), 4);
        for text in ["a", "b a b", "a a a a b"] {
            assert!((lm.perplexity(text).unwrap() - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn trigram_matches_hand_table() {
        // Corpus "the cat sat" / "the cat ran": 6 tokens, predicted vocabulary
        // {the, cat, sat, ran, </s>, <unk>} of size 6.
        // Held out "the cat ran":
        //   P(the | <s> <s>) = (2+1)/(2+6)
        //   P(cat | <s> the) = (2+1)/(2+6)
        //   P(ran | the cat) = (1+1)/(2+6)
        //   P(</s> | cat ran) = (1+1)/(1+6)
        let mut lm = NgramLM::new(3).unwrap();
        lm.train(&["The cat sat.", "the cat ran"]).unwrap();
        let probs: [f64; 4] = [3.0 / 8.0, 3.0 / 8.0, 2.0 / 8.0, 2.0 / 7.0];
        let want = (-(probs.iter().map(|p| p.ln()).sum::<f64>()) / 4.0).exp();
        assert!((lm.perplexity("the cat ran").unwrap() - want).abs() < 1e-9);
        // an unseen word goes to the unknown bucket: P(<unk> | the cat) = 1/8
        let ctx = vec!["the".to_string(), "cat".to_string()];
        assert!((lm.prob(&ctx, "dog").unwrap() - 1.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn repeated_token_perplexity_tends_to_one() {
        let mut last = f64::INFINITY;
        for n in [10, 100, 1000] {
            let sentence = vec!["la"; n].join(" ");
            let mut lm = NgramLM::new(2).unwrap();
            lm.train(&[sentence.as_str()]).unwrap();
            let p = lm.perplexity(&sentence).unwrap();
            assert!(p < last && p >= 1.0);
            last = p;
        }
        assert!(last < 1.01);
    }

    #[test]
    fn lm_errors() {
        let lm = NgramLM::new(3).unwrap();
        assert!(matches!(lm.perplexity("a b"), Err(Error::NotReady(_))));
        let mut lm = NgramLM::new(2).unwrap();
        lm.train(&["a b"]).unwrap();
        assert!(matches!(lm.perplexity("?!"), Err(Error::InvalidInput(_))));
        assert!(NgramLM::new(0).is_err());
    }

    #[test]
    fn context_probabilities_sum_to_one() {
        let mut lm = NgramLM::new(2).unwrap();
        lm.train(&["a b c a", "b b a c", "c a"]).unwrap();
        let vocab: Vec<String> = lm.vocab.iter().cloned().collect();
        for ctx in ["<s>", "a", "b", "c", "never"] {
            let total: f64 = vocab
                .iter()
                .map(|t| lm.prob(&[ctx.to_string()], t).unwrap())
                .sum();
            assert!((total - 1.0).abs() < 1e-12, "{ctx}: {total}");
        }
    }

    #[test]
    fn bleu_examples() {
        assert_eq!(bleu("The cat sat on the mat", "the cat sat on the mat.").unwrap(), 1.0);
        assert!(bleu("red green blue yellow", "one two three four").unwrap() < 0.05);
        // Half-length prefix: every precision is 1 after smoothing, only the
        // brevity penalty exp(1 - 8/4) remains.
        let r = "w1 w2 w3 w4 w5 w6 w7 w8";
        let got = bleu(r, "w1 w2 w3 w4").unwrap();
        assert!((got - (-1.0f64).exp()).abs() < 1e-12);
        assert!(bleu("...", "a").is_err());
    }

    #[test]
    fn sentiment_examples() {
        let lex = Lexicon::from_pairs([("good".to_string(), 2.0), ("bad".to_string(), -2.0)]);
        assert_eq!(sentiment("nothing here", &lex), 0.0);
        assert!((sentiment("Good!", &lex) - 2.0 / 19f64.sqrt()).abs() < 1e-12);
        assert!((sentiment("GOOD", &lex) - 0.458_831_467_741_123).abs() < 1e-12);
        assert_eq!(sentiment("bad", &lex), -sentiment("good", &lex));
        assert!(Lexicon::load(Path::new("/nonexistent/lexicon.tsv")).is_err());
        assert!(Lexicon::bundled().len() > 100);
        assert!(Lexicon::parse("word 2.0").is_err());
    }

    #[test]
    fn encode_examples() {
        let none = BTreeSet::new();
        let (vocab, m) = encode(&["a a b"], EncodeMode::Counts, &none).unwrap();
        assert_eq!(vocab, vec!["a", "b"]);
        assert_eq!(m.row(0), &[2.0, 1.0]);

        let docs = ["apple banana", "apple cherry", "apple"];
        let enc = Encoder::fit(&docs, EncodeMode::TfIdf, &none).unwrap();
        assert_eq!(enc.idf()[0], 1.0);
        let m = enc.transform(&docs);
        for r in 0..m.rows() {
            let norm: f64 = m.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
        // unseen terms are dropped, stopwords removed
        let stop = parse_stopwords(DEFAULT_STOPWORDS);
        let enc = Encoder::fit(&["the apple"], EncodeMode::Counts, &stop).unwrap();
        assert_eq!(enc.vocabulary(), &["apple".to_string()]);
        assert_eq!(enc.transform(&["the durian apple apple"]).row(0), &[2.0]);
        assert!(encode::<&str>(&[], EncodeMode::Counts, &none).is_err());
    }

    #[test]
    fn base_features() {
        let mut lm = NgramLM::new(3).unwrap();
        lm.train(&["all dogs bark loudly today", "some cats are good"]).unwrap();
        let lex = Lexicon::from_pairs([("good".to_string(), 2.0)]);
        let item = Item::new("i", ItemType::Syllogism, "all dogs bark loudly today", "all dogs bark loudly today").unwrap();
        let f = extract_base_features(&item, &lm, &lex).unwrap();
        assert_eq!(f.wc_premise, 5);
        assert_eq!(f.bleu_pc, 1.0);
        assert_eq!(f.sent_premise, 0.0);
        assert_eq!(f.to_vec().len(), FeatureVector::NAMES.len());

        let untrained = NgramLM::new(3).unwrap();
        assert!(matches!(
            extract_base_features(&item, &untrained, &lex),
            Err(Error::NotReady(_))
        ));
        let mut with_meta = item.clone();
        with_meta.metadata.insert(PPL_PREMISE_KEY.into(), 12.5.into());
        with_meta.metadata.insert(PPL_CONCLUSION_KEY.into(), 30.0.into());
        let f = extract_base_features(&with_meta, &untrained, &lex).unwrap();
        assert_eq!((f.ppl_premise, f.ppl_conclusion), (12.5, 30.0));
    }

    proptest! {
        #[test]
        fn bleu_is_bounded_and_reflexive(
            a in prop::collection::vec("[a-e]{1,3}", 1..12),
            b in prop::collection::vec("[a-e]{1,3}", 1..12),
        ) {
            let (a, b) = (a.join(" "), b.join(" "));
            prop_assert_eq!(bleu(&a, &a).unwrap(), 1.0);
            let s = bleu(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
        }

        #[test]
        fn unigram_training_perplexity_is_bounded(
            corpus in prop::collection::vec(prop::collection::vec("[a-f]", 1..8), 1..10),
        ) {
            let sentences: Vec<String> = corpus.iter().map(|s| s.join(" ")).collect();
            let mut lm = NgramLM::new(1).unwrap();
            lm.train(&sentences).unwrap();
            let ppl = lm.corpus_perplexity(&sentences).unwrap();
            prop_assert!(ppl <= lm.vocab_size() as f64 + 1.0);
        }

        #[test]
        fn sentiment_is_odd_and_bounded(vals in prop::collection::vec(-4.0f64..4.0, 1..6)) {
            let words: Vec<String> = (0..vals.len()).map(|i| format!("w{i}")).collect();
            let pos = Lexicon::from_pairs(words.iter().cloned().zip(vals.iter().copied()));
            let neg = Lexicon::from_pairs(words.iter().cloned().zip(vals.iter().map(|v| -v)));
            let text = words.join(" ");
            let s = sentiment(&text, &pos);
            prop_assert!((-1.0..=1.0).contains(&s));
            prop_assert!((s + sentiment(&text, &neg)).abs() < 1e-12);
        }
    }
}
