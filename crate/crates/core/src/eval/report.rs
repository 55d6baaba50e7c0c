use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{parse_answer, render_prompt, BenchmarkItem, EvalError, InferenceSetting, Label};
use crate::llm::Gateway;
use crate::util::bounded_map;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnswerParser {
    #[default]
    TokenScan,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub setting: InferenceSetting,
    pub model: String,
    pub answer_parser: AnswerParser,
}

/// Where raw answers come from.
pub trait AnswerSource: Sync {
    fn answer(&self, item: &BenchmarkItem, prompt: &str) -> Result<String, String>;

    fn concurrency(&self) -> usize {
        1
    }
}

/// Pre-recorded answers keyed by item id.
#[derive(Debug, Clone, Default)]
pub struct StubAnswers(pub HashMap<String, String>);

impl AnswerSource for StubAnswers {
    fn answer(&self, item: &BenchmarkItem, _prompt: &str) -> Result<String, String> {
        self.0.get(&item.id).cloned().ok_or_else(|| format!("no stub answer for {}", item.id))
    }
}

pub struct GatewayAnswers<'a> {
    pub gateway: &'a Gateway,
    pub model: String,
}

impl AnswerSource for GatewayAnswers<'_> {
    fn answer(&self, _item: &BenchmarkItem, prompt: &str) -> Result<String, String> {
        self.gateway.answer_item(prompt, &self.model).map_err(|e| e.to_string())
    }

    fn concurrency(&self) -> usize {
        self.gateway.config().max_in_flight
    }
}

/// Reads `{id, text}` lines.
pub fn load_stub_answers(path: &Path) -> Result<StubAnswers, EvalError> {
    #[derive(Deserialize)]
    struct Line {
        id: String,
        text: String,
    }
    let mut out = HashMap::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let l: Line =
            serde_json::from_str(&line).map_err(|e| EvalError::MalformedStub { line: i + 1, reason: e.to_string() })?;
        out.insert(l.id, l.text);
    }
    Ok(StubAnswers(out))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemResult {
    pub id: String,
    pub label: Label,
    pub predicted: Option<Label>,
    pub correct: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SliceStats {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
}

impl SliceStats {
    fn add(&mut self, correct: bool) {
        self.n += 1;
        self.correct += correct as usize;
        self.accuracy = self.correct as f64 / self.n as f64;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub setting: String,
    pub model: String,
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub unparseable: usize,
    pub errors: usize,
    pub slices: BTreeMap<String, SliceStats>,
}

pub struct EvalRun {
    pub report: EvalReport,
    pub results: Vec<ItemResult>,
}

impl EvalRun {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), EvalError> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| EvalError::Io(std::io::Error::other(e));
        out.write_record(["id", "label", "predicted", "correct", "error"]).map_err(io)?;
        for r in &self.results {
            out.write_record([
                r.id.as_str(),
                r.label.as_str(),
                r.predicted.map(Label::as_str).unwrap_or(""),
                if r.correct { "1" } else { "0" },
                r.error.as_deref().unwrap_or(""),
            ])
            .map_err(io)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Render, answer, parse and compare every item. Unparseable answers and
/// per-item failures count as incorrect.
pub fn evaluate(items: &[BenchmarkItem], cfg: &EvalConfig, source: &dyn AnswerSource) -> EvalRun {
    let results = bounded_map(items, source.concurrency(), |item| {
        let prompt = render_prompt(item, cfg.setting);
        let (predicted, error) = match source.answer(item, &prompt) {
            Ok(raw) => (
                match cfg.answer_parser {
                    AnswerParser::TokenScan => parse_answer(&raw),
                },
                None,
            ),
            Err(e) => (None, Some(e)),
        };
        ItemResult { id: item.id.clone(), label: item.label, predicted, correct: predicted == Some(item.label), error }
    });
    let n = results.len();
    let correct = results.iter().filter(|r| r.correct).count();
    let report = EvalReport {
        setting: cfg.setting.to_string(),
        model: cfg.model.clone(),
        n,
        correct,
        accuracy: if n == 0 { 0.0 } else { correct as f64 / n as f64 },
        unparseable: results.iter().filter(|r| r.predicted.is_none()).count(),
        errors: results.iter().filter(|r| r.error.is_some()).count(),
        slices: BTreeMap::new(),
    };
    EvalRun { report, results }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SliceSpec {
    /// One slice per term; an item joins every slice whose term it carries.
    MeshTerms(Vec<String>),
    /// Disjoint inclusive ranges.
    YearRanges(Vec<(i32, i32)>),
}

impl SliceSpec {
    /// Parses `2001-2004,2005-2007`.
    pub fn parse_year_ranges(s: &str) -> Result<Self, EvalError> {
        let ranges = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| {
                let (a, b) = p.trim().split_once('-').ok_or_else(|| EvalError::InvalidYearRange(p.to_string()))?;
                let parse = |x: &str| x.trim().parse::<i32>().map_err(|_| EvalError::InvalidYearRange(p.to_string()));
                Ok((parse(a)?, parse(b)?))
            })
            .collect::<Result<Vec<_>, EvalError>>()?;
        Ok(SliceSpec::YearRanges(ranges))
    }
}

/// Per-slice accuracy. Items missing the sliced attribute land in an
/// `unattributed` slice for that slicing.
pub fn slice(
    items: &[BenchmarkItem],
    results: &[ItemResult],
    by: &SliceSpec,
) -> Result<BTreeMap<String, SliceStats>, EvalError> {
    let correct: HashMap<&str, bool> = results.iter().map(|r| (r.id.as_str(), r.correct)).collect();
    let is_correct = |item: &BenchmarkItem| correct.get(item.id.as_str()).copied().unwrap_or(false);
    let mut out = BTreeMap::new();
    match by {
        SliceSpec::MeshTerms(terms) => {
            for t in terms {
                out.insert(format!("mesh:{t}"), SliceStats::default());
            }
            for item in items {
                if item.mesh_terms.is_empty() {
                    out.entry("mesh:unattributed".into()).or_insert_with(SliceStats::default).add(is_correct(item));
                    continue;
                }
                for t in terms {
                    if item.mesh_terms.iter().any(|m| m.eq_ignore_ascii_case(t)) {
                        out.get_mut(&format!("mesh:{t}")).expect("inserted above").add(is_correct(item));
                    }
                }
            }
        }
        SliceSpec::YearRanges(ranges) => {
            let key = |(a, b): &(i32, i32)| format!("{a}-{b}");
            for r in ranges {
                if r.0 > r.1 {
                    return Err(EvalError::InvalidYearRange(key(r)));
                }
            }
            for (i, r) in ranges.iter().enumerate() {
                for s in &ranges[i + 1..] {
                    if r.0 <= s.1 && s.0 <= r.1 {
                        return Err(EvalError::OverlappingYearRanges { a: key(r), b: key(s) });
                    }
                }
                out.insert(format!("year:{}", key(r)), SliceStats::default());
            }
            for item in items {
                match item.year {
                    None => {
                        out.entry("year:unattributed".into()).or_insert_with(SliceStats::default).add(is_correct(item))
                    }
                    Some(y) => {
                        if let Some(r) = ranges.iter().find(|(a, b)| (*a..=*b).contains(&y)) {
                            out.get_mut(&format!("year:{}", key(r))).expect("inserted above").add(is_correct(item));
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}
