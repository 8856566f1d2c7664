//! Synthetic two-turn disambiguation corpus.
//!
//! Turn 1 is always `the bank is {adj}`; turn 2 is a short template holding
//! exactly one cue word drawn from the label's lexicon. Only the cue carries
//! class information. Episodes are stored as token ids against a [`Vocab`]
//! derived deterministically from the [`DatasetSpec`].

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NrrError, Result};
use crate::kernel::RngStream;

/// Reserved token standing in for an uninformative turn 2.
pub const NEUTRAL_TOKEN: &str = "<neutral>";
pub const NEUTRAL_ID: usize = 0;
/// Offset added to the training seed to draw the held-out evaluation set.
pub const EVAL_SEED_OFFSET: u64 = 1_000_003;

const CUE_SLOT: &str = "{cue}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Label {
    Financial,
    River,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Financial, Label::River];
    pub const COUNT: usize = 2;

    pub fn index(self) -> usize {
        match self {
            Label::Financial => 0,
            Label::River => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Label::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Financial => "FINANCIAL",
            Label::River => "RIVER",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
    ambiguous: usize,
}

impl Vocab {
    /// Builds a vocabulary with [`NEUTRAL_TOKEN`] at index 0 followed by
    /// `tokens` in first-seen order. `ambiguous` must appear in `tokens`.
    pub fn new<'a>(tokens: impl IntoIterator<Item = &'a str>, ambiguous: &str) -> Result<Self> {
        let mut list = vec![NEUTRAL_TOKEN.to_string()];
        let mut ids = HashMap::from([(NEUTRAL_TOKEN.to_string(), NEUTRAL_ID)]);
        for t in tokens {
            if t == NEUTRAL_TOKEN {
                return Err(NrrError::Config(format!("{NEUTRAL_TOKEN} is reserved")));
            }
            if !ids.contains_key(t) {
                ids.insert(t.to_string(), list.len());
                list.push(t.to_string());
            }
        }
        let ambiguous = *ids
            .get(ambiguous)
            .ok_or_else(|| NrrError::Config(format!("ambiguous token `{ambiguous}` not in vocab")))?;
        Ok(Self {
            tokens: list,
            ids,
            ambiguous,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Result<usize> {
        self.ids
            .get(token)
            .copied()
            .ok_or_else(|| NrrError::UnknownToken(token.to_string()))
    }

    pub fn token(&self, id: usize) -> Result<&str> {
        self.tokens
            .get(id)
            .map(String::as_str)
            .ok_or_else(|| NrrError::UnknownToken(format!("#{id}")))
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn ambiguous_id(&self) -> usize {
        self.ambiguous
    }

    pub fn ambiguous_token(&self) -> &str {
        &self.tokens[self.ambiguous]
    }

    pub fn encode(&self, tokens: &[&str]) -> Result<Vec<usize>> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Result<Vec<String>> {
        ids.iter().map(|&i| self.token(i).map(str::to_string)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub turn1: Vec<usize>,
    pub turn2: Vec<usize>,
    pub label: Label,
    pub ambiguous_index: usize,
}

impl Episode {
    /// Builds an episode, locating the single ambiguous token in `turn1`.
    pub fn new(vocab: &Vocab, turn1: Vec<usize>, turn2: Vec<usize>, label: Label) -> Result<Self> {
        let amb = vocab.ambiguous_id();
        let hits: Vec<usize> = turn1
            .iter()
            .enumerate()
            .filter_map(|(i, &t)| (t == amb).then_some(i))
            .collect();
        if hits.len() != 1 {
            return Err(NrrError::Structure(format!(
                "turn 1 must hold exactly one `{}`, found {}",
                vocab.ambiguous_token(),
                hits.len()
            )));
        }
        if turn2.is_empty() {
            return Err(NrrError::Structure("turn 2 is empty".into()));
        }
        Ok(Self {
            turn1,
            turn2,
            label,
            ambiguous_index: hits[0],
        })
    }

    pub fn is_neutral(&self) -> bool {
        self.turn2 == [NEUTRAL_ID]
    }

    pub fn render(&self, vocab: &Vocab) -> Result<String> {
        Ok(format!(
            "{} | {}",
            vocab.decode(&self.turn1)?.join(" "),
            vocab.decode(&self.turn2)?.join(" ")
        ))
    }
}

/// Turn 2 replaced by the single [`NEUTRAL_TOKEN`]; the label is kept.
pub fn neutralize(e: &Episode) -> Episode {
    Episode {
        turn2: vec![NEUTRAL_ID],
        ..e.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueLexicons {
    pub financial: Vec<String>,
    pub river: Vec<String>,
}

impl CueLexicons {
    pub fn for_label(&self, label: Label) -> &[String] {
        match label {
            Label::Financial => &self.financial,
            Label::River => &self.river,
        }
    }
}

impl Default for CueLexicons {
    fn default() -> Self {
        let owned = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self {
            financial: owned(&["investor", "loan", "teller", "vault", "deposit"]),
            river: owned(&["ducks", "river", "water", "shore", "fish"]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub n: usize,
    /// Fraction of FINANCIAL episodes.
    pub balance: f64,
    pub ambiguous_token: String,
    pub adjectives: Vec<String>,
    pub cue_lexicons: CueLexicons,
    /// Whitespace-tokenized templates with one `{cue}` slot.
    pub turn2_templates: Vec<String>,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            n: 1000,
            balance: 0.5,
            ambiguous_token: "bank".into(),
            adjectives: ["solid", "stable", "old", "new"].map(String::from).to_vec(),
            cue_lexicons: CueLexicons::default(),
            turn2_templates: ["the {cue} is nearby", "i can see the {cue}", "there are {cue} here"]
                .map(String::from)
                .to_vec(),
            seed: 0,
        }
    }
}

impl DatasetSpec {
    fn turn1_words(&self) -> [&str; 4] {
        ["the", &self.ambiguous_token, "is", "{adj}"]
    }

    fn template_words(&self) -> impl Iterator<Item = &str> {
        self.turn2_templates
            .iter()
            .flat_map(|t| t.split_whitespace())
            .filter(|w| *w != CUE_SLOT)
    }

    pub fn financial_count(&self) -> usize {
        (self.n as f64 * self.balance).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(NrrError::Config(m));
        if self.n == 0 {
            return err("n must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.balance) {
            return err(format!("balance {} outside [0, 1]", self.balance));
        }
        let target = self.n as f64 * self.balance;
        if (target - target.round()).abs() > 1e-9 {
            return err(format!("n·balance = {target} is not integral"));
        }
        if self.adjectives.is_empty() {
            return err("adjective list is empty".into());
        }
        if self.turn2_templates.is_empty() {
            return err("no turn 2 templates".into());
        }
        for t in &self.turn2_templates {
            let slots = t.split_whitespace().filter(|w| *w == CUE_SLOT).count();
            if slots != 1 {
                return err(format!("template `{t}` must contain exactly one {CUE_SLOT}"));
            }
        }
        for label in Label::ALL {
            if self.cue_lexicons.for_label(label).is_empty() {
                return err(format!("{} cue lexicon is empty", label.as_str()));
            }
        }
        let fin: HashSet<&str> = self.cue_lexicons.financial.iter().map(String::as_str).collect();
        if let Some(shared) = self.cue_lexicons.river.iter().find(|c| fin.contains(c.as_str())) {
            return err(format!("cue `{shared}` appears in both lexicons"));
        }
        let carriers: HashSet<&str> = self
            .turn1_words()
            .into_iter()
            .chain(self.adjectives.iter().map(String::as_str))
            .chain(self.template_words())
            .collect();
        for cue in self.cue_lexicons.financial.iter().chain(&self.cue_lexicons.river) {
            if carriers.contains(cue.as_str()) {
                return err(format!("cue `{cue}` also occurs outside the cue slot"));
            }
        }
        if self.adjectives.contains(&self.ambiguous_token) || self.template_words().any(|w| w == self.ambiguous_token) {
            return err(format!(
                "ambiguous token `{}` may only occur once in turn 1",
                self.ambiguous_token
            ));
        }
        let all_tokens = carriers
            .iter()
            .copied()
            .chain(self.cue_lexicons.financial.iter().map(String::as_str))
            .chain(self.cue_lexicons.river.iter().map(String::as_str));
        for t in all_tokens {
            if t != "{adj}" && (t.is_empty() || t.chars().any(char::is_whitespace) || t == NEUTRAL_TOKEN) {
                return err(format!("bad token `{t}`"));
            }
        }
        Ok(())
    }

    /// Vocabulary induced by the spec, identical for identical specs.
    pub fn vocab(&self) -> Result<Vocab> {
        self.validate()?;
        let words = self
            .turn1_words()
            .into_iter()
            .filter(|w| *w != "{adj}")
            .chain(self.adjectives.iter().map(String::as_str))
            .chain(self.template_words())
            .chain(self.cue_lexicons.financial.iter().map(String::as_str))
            .chain(self.cue_lexicons.river.iter().map(String::as_str));
        Vocab::new(words, &self.ambiguous_token)
    }

    /// Same generator settings with `n` episodes and the held-out seed.
    pub fn held_out(&self, n: usize) -> DatasetSpec {
        DatasetSpec {
            n,
            seed: self.seed.wrapping_add(EVAL_SEED_OFFSET),
            ..self.clone()
        }
    }
}

/// Generates exactly `spec.n` episodes, `round(n·balance)` of them FINANCIAL,
/// in shuffled order. Deterministic given the spec.
pub fn generate(spec: &DatasetSpec) -> Result<Vec<Episode>> {
    let vocab = spec.vocab()?;
    let mut rng = RngStream::new(spec.seed);

    let n_fin = spec.financial_count();
    let mut labels: Vec<Label> = std::iter::repeat_n(Label::Financial, n_fin)
        .chain(std::iter::repeat_n(Label::River, spec.n - n_fin))
        .collect();
    rng.shuffle(&mut labels);

    let the = vocab.id("the")?;
    let is = vocab.id("is")?;
    labels
        .into_iter()
        .map(|label| {
            let adj = vocab.id(rng.choose(&spec.adjectives))?;
            let turn1 = vec![the, vocab.ambiguous_id(), is, adj];
            let cue = rng.choose(spec.cue_lexicons.for_label(label));
            let template = rng.choose(&spec.turn2_templates);
            let turn2 = template
                .split_whitespace()
                .map(|w| vocab.id(if w == CUE_SLOT { cue } else { w }))
                .collect::<Result<Vec<_>>>()?;
            Episode::new(&vocab, turn1, turn2, label)
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct EpisodeLine<'a> {
    #[serde(borrow)]
    turn1: Vec<&'a str>,
    #[serde(borrow)]
    turn2: Vec<&'a str>,
    label: Label,
}

/// One JSON object per line: `{"turn1":[..],"turn2":[..],"label":".."}`.
pub fn write_jsonl_to<W: Write>(episodes: &[Episode], vocab: &Vocab, mut out: W) -> Result<()> {
    for e in episodes {
        let line = EpisodeLine {
            turn1: e.turn1.iter().map(|&i| vocab.token(i)).collect::<Result<_>>()?,
            turn2: e.turn2.iter().map(|&i| vocab.token(i)).collect::<Result<_>>()?,
            label: e.label,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_jsonl(episodes: &[Episode], vocab: &Vocab, path: impl AsRef<Path>) -> Result<()> {
    write_jsonl_to(episodes, vocab, BufWriter::new(File::create(path)?))
}

pub fn read_jsonl_from<R: BufRead>(input: R, vocab: &Vocab) -> Result<Vec<Episode>> {
    let mut episodes = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let at = |message: String| NrrError::Parse { line: line_no, message };
        let raw: EpisodeLine = serde_json::from_str(&line).map_err(|e| at(e.to_string()))?;
        let turn1 = vocab.encode(&raw.turn1).map_err(|e| at(e.to_string()))?;
        let turn2 = vocab.encode(&raw.turn2).map_err(|e| at(e.to_string()))?;
        let episode = Episode::new(vocab, turn1, turn2, raw.label).map_err(|e| at(e.to_string()))?;
        episodes.push(episode);
    }
    Ok(episodes)
}

pub fn read_jsonl(path: impl AsRef<Path>, vocab: &Vocab) -> Result<Vec<Episode>> {
    read_jsonl_from(BufReader::new(File::open(path)?), vocab)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tokens(vocab: &Vocab, ids: &[usize]) -> Vec<String> {
        vocab.decode(ids).unwrap()
    }

    #[test]
    fn vocab_is_bijective_with_single_neutral() {
        let v = DatasetSpec::default().vocab().unwrap();
        assert_eq!(v.token(NEUTRAL_ID).unwrap(), NEUTRAL_TOKEN);
        assert_eq!(v.tokens().iter().filter(|t| *t == NEUTRAL_TOKEN).count(), 1);
        for (i, t) in v.tokens().iter().enumerate() {
            assert_eq!(v.id(t).unwrap(), i);
        }
        assert_eq!(v.ambiguous_token(), "bank");
    }

    #[test]
    fn default_spec_is_balanced() {
        let eps = generate(&DatasetSpec::default()).unwrap();
        assert_eq!(eps.len(), 1000);
        let fin = eps.iter().filter(|e| e.label == Label::Financial).count();
        assert_eq!(fin, 500);
    }

    #[test]
    fn small_balanced_spec() {
        let spec = DatasetSpec {
            n: 10,
            ..Default::default()
        };
        let eps = generate(&spec).unwrap();
        let fin = eps.iter().filter(|e| e.label == Label::Financial).count();
        assert_eq!((fin, eps.len() - fin), (5, 5));
    }

    #[test]
    fn turn1_and_cue_structure() {
        let spec = DatasetSpec::default();
        let v = spec.vocab().unwrap();
        for e in generate(&spec).unwrap() {
            let t1 = tokens(&v, &e.turn1);
            assert_eq!(&t1[..3], ["the", "bank", "is"]);
            assert!(spec.adjectives.contains(&t1[3]));
            assert_eq!(e.ambiguous_index, 1);

            let t2 = tokens(&v, &e.turn2);
            let own = spec.cue_lexicons.for_label(e.label);
            let other = spec
                .cue_lexicons
                .for_label(Label::from_index(1 - e.label.index()).unwrap());
            assert_eq!(t2.iter().filter(|t| own.contains(t)).count(), 1);
            assert_eq!(t2.iter().filter(|t| other.contains(t)).count(), 0);
            assert!(!e.turn2.contains(&NEUTRAL_ID));
        }
    }

    #[test]
    fn cue_examples_map_to_labels() {
        // "investor" is a FINANCIAL cue, "ducks" a RIVER cue
        let spec = DatasetSpec::default();
        let v = spec.vocab().unwrap();
        let eps = generate(&spec).unwrap();
        let investor = v.id("investor").unwrap();
        let ducks = v.id("ducks").unwrap();
        let with_investor: Vec<_> = eps.iter().filter(|e| e.turn2.contains(&investor)).collect();
        let with_ducks: Vec<_> = eps.iter().filter(|e| e.turn2.contains(&ducks)).collect();
        assert!(!with_investor.is_empty() && !with_ducks.is_empty());
        assert!(with_investor.iter().all(|e| e.label == Label::Financial));
        assert!(with_ducks.iter().all(|e| e.label == Label::River));
    }

    #[test]
    fn neutralize_is_idempotent() {
        let spec = DatasetSpec::default().held_out(200);
        let eps = generate(&spec).unwrap();
        let neutral: Vec<Episode> = eps.iter().map(neutralize).collect();
        for (e, n) in eps.iter().zip(&neutral) {
            assert_eq!(n.turn2, vec![NEUTRAL_ID]);
            assert_eq!(n.label, e.label);
            assert_eq!(n.turn1, e.turn1);
            assert_eq!(&neutralize(n), n);
        }
        assert!(neutral.windows(2).all(|w| w[0].turn2 == w[1].turn2));
    }

    #[test]
    fn held_out_seed_differs() {
        let spec = DatasetSpec::default();
        let eval = spec.held_out(200);
        assert_eq!(eval.n, 200);
        assert_ne!(eval.seed, spec.seed);
        assert_eq!(eval.vocab().unwrap(), spec.vocab().unwrap());
    }

    #[test]
    fn config_errors() {
        let mut spec = DatasetSpec::default();
        spec.cue_lexicons.river.clear();
        assert!(matches!(generate(&spec), Err(NrrError::Config(_))));

        let spec = DatasetSpec {
            n: 7,
            ..Default::default()
        };
        assert!(matches!(spec.validate(), Err(NrrError::Config(_))));

        let mut spec = DatasetSpec::default();
        spec.cue_lexicons.river.push("loan".into());
        assert!(spec.validate().is_err());

        let mut spec = DatasetSpec::default();
        spec.cue_lexicons.river.push("here".into());
        assert!(spec.validate().is_err());
    }

    #[test]
    fn jsonl_round_trip_and_stable_bytes() {
        let spec = DatasetSpec::default();
        let vocab = spec.vocab().unwrap();
        let eps = generate(&spec).unwrap();
        let mut a = Vec::new();
        write_jsonl_to(&eps, &vocab, &mut a).unwrap();
        let mut b = Vec::new();
        write_jsonl_to(&generate(&spec).unwrap(), &vocab, &mut b).unwrap();
        assert_eq!(a, b);

        let back = read_jsonl_from(a.as_slice(), &vocab).unwrap();
        assert_eq!(back, eps);

        let first = std::str::from_utf8(&a).unwrap().lines().next().unwrap();
        assert!(first.starts_with(r#"{"turn1":["the","bank","is","#), "{first}");
        assert!(first.ends_with(r#""label":"FINANCIAL"}"#) || first.ends_with(r#""label":"RIVER"}"#));
    }

    #[test]
    fn unknown_label_reports_line() {
        let vocab = DatasetSpec::default().vocab().unwrap();
        let text = concat!(
            r#"{"turn1":["the","bank","is","old"],"turn2":["ducks"],"label":"RIVER"}"#,
            "\n",
            r#"{"turn1":["the","bank","is","old"],"turn2":["ducks"],"label":"SWAMP"}"#,
            "\n"
        );
        match read_jsonl_from(text.as_bytes(), &vocab) {
            Err(NrrError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_token_and_missing_ambiguous_report_line() {
        let vocab = DatasetSpec::default().vocab().unwrap();
        let text = r#"{"turn1":["the","bank","is","purple"],"turn2":["ducks"],"label":"RIVER"}"#;
        assert!(matches!(
            read_jsonl_from(text.as_bytes(), &vocab),
            Err(NrrError::Parse { line: 1, .. })
        ));
        let text = r#"{"turn1":["the","is","old"],"turn2":["ducks"],"label":"RIVER"}"#;
        assert!(matches!(
            read_jsonl_from(text.as_bytes(), &vocab),
            Err(NrrError::Parse { line: 1, .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn generation_is_deterministic_and_exactly_balanced(seed in any::<u64>(), half in 1usize..60) {
            let spec = DatasetSpec { n: 2 * half, seed, ..Default::default() };
            let a = generate(&spec).unwrap();
            let b = generate(&spec).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.iter().filter(|e| e.label == Label::Financial).count(), half);
        }
    }
}
