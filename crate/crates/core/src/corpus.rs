//! Document registry: ingestion of metadata tables and texts, edition
//! deduplication, and label queries.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

pub const DEFAULT_MIN_YEAR: i32 = 1600;
pub const DEFAULT_MAX_YEAR: i32 = 1950;

/// Metadata columns, in the order they appear in the canonical table.
pub const METADATA_COLUMNS: [&str; 8] = [
    "doc_id",
    "title",
    "author_id",
    "year",
    "canon",
    "adventure",
    "complete_works",
    "text_path",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Canon,
    Archive,
    Adventure,
    General,
}

impl Label {
    pub const ALL: [Label; 4] = [Label::Canon, Label::Archive, Label::Adventure, Label::General];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Canon => "canon",
            Label::Archive => "archive",
            Label::Adventure => "adventure",
            Label::General => "general",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Label::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

/// Tag set holding at most one of {canon, archive} and at most one of
/// {adventure, general}. The two axes are stored as options so the
/// exclusivity holds by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labels {
    pub canon: Option<bool>,
    pub adventure: Option<bool>,
}

impl Default for Labels {
    /// Unlabeled documents fall in the background classes.
    fn default() -> Self {
        Labels {
            canon: Some(false),
            adventure: Some(false),
        }
    }
}

impl Labels {
    pub fn unset() -> Self {
        Labels {
            canon: None,
            adventure: None,
        }
    }

    pub fn has(&self, label: Label) -> bool {
        match label {
            Label::Canon => self.canon == Some(true),
            Label::Archive => self.canon == Some(false),
            Label::Adventure => self.adventure == Some(true),
            Label::General => self.adventure == Some(false),
        }
    }

    pub fn tags(&self) -> Vec<Label> {
        Label::ALL.into_iter().filter(|l| self.has(*l)).collect()
    }
}

/// A contiguous sentence of `raw_text`, addressed in character offsets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub start: usize,
    pub end: usize,
    /// Sentence text; holds the masked form once names have been masked.
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    pub author_id: String,
    pub year: i32,
    pub raw_text: String,
    #[serde(default)]
    pub sentences: Vec<Sentence>,
    /// Proper-name spans as `(start_char, end_char)`, sorted and disjoint.
    #[serde(default)]
    pub name_spans: Vec<(usize, usize)>,
    #[serde(default)]
    pub ocr_score: Option<f64>,
    #[serde(default)]
    pub labels: Labels,
}

impl Document {
    pub fn new(
        doc_id: impl Into<String>,
        author_id: impl Into<String>,
        year: i32,
        raw_text: impl Into<String>,
    ) -> Self {
        Document {
            doc_id: doc_id.into(),
            title: String::new(),
            author_id: author_id.into(),
            year,
            raw_text: raw_text.into(),
            sentences: Vec::new(),
            name_spans: Vec::new(),
            ocr_score: None,
            labels: Labels::default(),
        }
    }

    pub fn with_title(mut self, title: impl Into<String>) -> Self {
        self.title = title.into();
        self
    }

    pub fn with_labels(mut self, labels: Labels) -> Self {
        self.labels = labels;
        self
    }

    /// Sets name spans after sorting and validating them against the text.
    pub fn with_name_spans(mut self, mut spans: Vec<(usize, usize)>) -> Result<Self> {
        spans.sort_unstable();
        validate_spans(&self.doc_id, &spans, self.raw_text.chars().count())?;
        self.name_spans = spans;
        Ok(self)
    }
}

fn validate_spans(doc_id: &str, spans: &[(usize, usize)], char_len: usize) -> Result<()> {
    let mut prev_end = 0;
    for (i, &(start, end)) in spans.iter().enumerate() {
        if start >= end || end > char_len || (i > 0 && start < prev_end) {
            return Err(Error::InvalidSpan {
                doc_id: doc_id.to_string(),
                start,
                end,
            });
        }
        prev_end = end;
    }
    Ok(())
}

/// Registry of documents keyed by `doc_id`, with an author index kept in
/// lockstep.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    documents: BTreeMap<String, Document>,
    author_index: BTreeMap<String, BTreeSet<String>>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_documents(docs: impl IntoIterator<Item = Document>) -> Result<Self> {
        let mut c = Corpus::new();
        for d in docs {
            c.insert(d)?;
        }
        Ok(c)
    }

    pub fn insert(&mut self, doc: Document) -> Result<()> {
        if self.documents.contains_key(&doc.doc_id) {
            return Err(Error::DuplicateDocId(doc.doc_id));
        }
        self.author_index
            .entry(doc.author_id.clone())
            .or_default()
            .insert(doc.doc_id.clone());
        self.documents.insert(doc.doc_id.clone(), doc);
        Ok(())
    }

    fn remove(&mut self, doc_id: &str) -> Option<Document> {
        let doc = self.documents.remove(doc_id)?;
        if let Some(set) = self.author_index.get_mut(&doc.author_id) {
            set.remove(doc_id);
            if set.is_empty() {
                self.author_index.remove(&doc.author_id);
            }
        }
        Some(doc)
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.documents.get(doc_id)
    }

    pub fn get_mut(&mut self, doc_id: &str) -> Option<&mut Document> {
        self.documents.get_mut(doc_id)
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.documents.contains_key(doc_id)
    }

    /// Documents in ascending `doc_id` order.
    pub fn documents(&self) -> impl Iterator<Item = &Document> {
        self.documents.values()
    }

    /// Mutable access to documents. Identity fields (`doc_id`, `author_id`)
    /// must not be changed through it.
    pub fn documents_mut(&mut self) -> impl Iterator<Item = &mut Document> {
        self.documents.values_mut()
    }

    pub fn doc_ids(&self) -> Vec<String> {
        self.documents.keys().cloned().collect()
    }

    pub fn author_index(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.author_index
    }

    pub fn author_of(&self, doc_id: &str) -> Option<&str> {
        self.documents.get(doc_id).map(|d| d.author_id.as_str())
    }

    pub fn year_of(&self, doc_id: &str) -> Option<i32> {
        self.documents.get(doc_id).map(|d| d.year)
    }

    /// Keeps only documents for which `keep` returns true.
    pub fn retain(&mut self, mut keep: impl FnMut(&Document) -> bool) {
        let drop: Vec<String> = self
            .documents
            .values()
            .filter(|d| !keep(d))
            .map(|d| d.doc_id.clone())
            .collect();
        for id in drop {
            self.remove(&id);
        }
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let docs: Vec<&Document> = self.documents.values().collect();
        let text = serde_json::to_string(&docs)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let docs: Vec<Document> = serde_json::from_str(&text)?;
        Corpus::from_documents(docs)
    }
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub min_year: i32,
    pub max_year: i32,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            min_year: DEFAULT_MIN_YEAR,
            max_year: DEFAULT_MAX_YEAR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    /// 1-based line number in the metadata file.
    pub line: usize,
    pub doc_id: String,
    pub message: String,
}

#[derive(Debug)]
pub struct IngestReport {
    pub corpus: Corpus,
    pub row_errors: Vec<RowError>,
    /// Rows flagged as complete-works volumes and skipped.
    pub complete_works: Vec<String>,
}

/// Loads a tab-separated metadata table and the texts it references.
///
/// Row-level problems (missing text, unparseable year, year out of range,
/// bad span sidecar) are collected and the row skipped. A repeated
/// `doc_id` aborts the whole ingest. For a text `x.txt`, an optional
/// sidecar `x.txt.spans` holds `start<TAB>end` character offsets.
pub fn ingest(metadata: &Path, text_dir: &Path, opts: &IngestOptions) -> Result<IngestReport> {
    let table = fs::read_to_string(metadata).map_err(|e| Error::io(metadata, e))?;
    let mut lines = table.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Metadata(format!("{} is empty", metadata.display())))?;
    let header: Vec<&str> = header
        .trim_start_matches('\u{feff}')
        .split('\t')
        .map(str::trim)
        .collect();
    let col = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Error::Metadata(format!("missing column {name:?}")))
    };
    let cols: Vec<usize> = METADATA_COLUMNS.iter().map(|c| col(c)).collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let get = |k: usize| fields.get(cols[k]).map(|s| s.trim()).unwrap_or("");
        let doc_id = get(0).to_string();
        if !seen.insert(doc_id.clone()) {
            return Err(Error::DuplicateDocId(doc_id));
        }
        rows.push((i + 1, doc_id, fields.iter().map(|s| s.to_string()).collect::<Vec<_>>()));
    }

    let mut report = IngestReport {
        corpus: Corpus::new(),
        row_errors: Vec::new(),
        complete_works: Vec::new(),
    };
    for (line, doc_id, fields) in rows {
        let get = |k: usize| fields.get(cols[k]).map(|s| s.trim()).unwrap_or("").to_string();
        let values: Vec<String> = (0..METADATA_COLUMNS.len()).map(get).collect();
        match parse_row(&doc_id, &values, text_dir, opts) {
            Ok(Some(doc)) => report.corpus.insert(doc)?,
            Ok(None) => report.complete_works.push(doc_id),
            Err(message) => report.row_errors.push(RowError { line, doc_id, message }),
        }
    }
    Ok(report)
}

fn parse_flag(name: &str, v: &str) -> std::result::Result<bool, String> {
    match v {
        "1" => Ok(true),
        "0" | "" => Ok(false),
        other => Err(format!("{name} must be 0 or 1, got {other:?}")),
    }
}

fn parse_row(
    doc_id: &str,
    values: &[String],
    text_dir: &Path,
    opts: &IngestOptions,
) -> std::result::Result<Option<Document>, String> {
    let get = |k: usize| values[k].as_str();
    if doc_id.is_empty() {
        return Err("empty doc_id".into());
    }
    let year: i32 = get(3).parse().map_err(|_| format!("unparseable year {:?}", get(3)))?;
    if year < opts.min_year || year > opts.max_year {
        return Err(format!("year {year} outside {}-{}", opts.min_year, opts.max_year));
    }
    let canon = parse_flag("canon", get(4))?;
    let adventure = parse_flag("adventure", get(5))?;
    if parse_flag("complete_works", get(6))? {
        return Ok(None);
    }
    let path: PathBuf = text_dir.join(get(7));
    let raw_text = fs::read_to_string(&path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;

    let doc = Document {
        doc_id: doc_id.to_string(),
        title: get(1).to_string(),
        author_id: get(2).to_string(),
        year,
        raw_text,
        sentences: Vec::new(),
        name_spans: Vec::new(),
        ocr_score: None,
        labels: Labels {
            canon: Some(canon),
            adventure: Some(adventure),
        },
    };
    let mut sidecar = path.into_os_string();
    sidecar.push(".spans");
    let sidecar = PathBuf::from(sidecar);
    if sidecar.exists() {
        let spans = read_spans(&sidecar)?;
        return doc.with_name_spans(spans).map(Some).map_err(|e| e.to_string());
    }
    Ok(Some(doc))
}

fn read_spans(path: &Path) -> std::result::Result<Vec<(usize, usize)>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut spans = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split('\t');
        let parse = |s: Option<&str>| s.and_then(|s| s.trim().parse::<usize>().ok());
        match (parse(it.next()), parse(it.next())) {
            (Some(a), Some(b)) => spans.push((a, b)),
            _ => return Err(format!("{}:{}: malformed span line", path.display(), i + 1)),
        }
    }
    Ok(spans)
}

/// Title key used to match editions of the same work: NFC, lowercased,
/// leading French article removed, punctuation dropped, whitespace collapsed.
pub fn normalize_title(title: &str) -> String {
    let folded: String = title.nfc().collect::<String>().to_lowercase().replace('’', "'");
    let trimmed = folded.trim_start();
    let mut rest = trimmed;
    for article in ["les ", "le ", "la ", "l'"] {
        if let Some(r) = trimmed.strip_prefix(article) {
            rest = r;
            break;
        }
    }
    let cleaned: String = rest
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Removal {
    pub removed: String,
    pub kept: String,
    /// True when the kept and removed editions share the same year.
    pub tie: bool,
}

/// Keeps the earliest edition of each (author, normalized title) work.
/// Equal years fall back to the smallest `doc_id`.
pub fn dedup(corpus: &Corpus) -> (Corpus, Vec<Removal>) {
    let mut groups: BTreeMap<(String, String), Vec<&Document>> = BTreeMap::new();
    for d in corpus.documents() {
        groups
            .entry((d.author_id.clone(), normalize_title(&d.title)))
            .or_default()
            .push(d);
    }
    let mut out = corpus.clone();
    let mut log = Vec::new();
    for docs in groups.values().filter(|g| g.len() > 1) {
        let keep = docs
            .iter()
            .min_by(|a, b| a.year.cmp(&b.year).then_with(|| a.doc_id.cmp(&b.doc_id)))
            .expect("non-empty group");
        for d in docs.iter().filter(|d| d.doc_id != keep.doc_id) {
            out.remove(&d.doc_id);
            log.push(Removal {
                removed: d.doc_id.clone(),
                kept: keep.doc_id.clone(),
                tie: d.year == keep.year,
            });
        }
    }
    (out, log)
}

/// Boolean expression over label tags: `tag`, `NOT e`, `e AND e`, `e OR e`,
/// parentheses. `AND` binds tighter than `OR`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelQuery {
    Tag(Label),
    Not(Box<LabelQuery>),
    And(Box<LabelQuery>, Box<LabelQuery>),
    Or(Box<LabelQuery>, Box<LabelQuery>),
}

impl LabelQuery {
    pub fn parse(src: &str) -> Result<Self> {
        let tokens = tokenize_query(src);
        if tokens.is_empty() {
            return Err(Error::LabelQuery("empty query".into()));
        }
        let mut p = QueryParser { tokens, pos: 0 };
        let q = p.or()?;
        if p.pos != p.tokens.len() {
            return Err(Error::LabelQuery(format!("unexpected token {:?}", p.tokens[p.pos])));
        }
        Ok(q)
    }

    pub fn matches(&self, labels: &Labels) -> bool {
        match self {
            LabelQuery::Tag(l) => labels.has(*l),
            LabelQuery::Not(q) => !q.matches(labels),
            LabelQuery::And(a, b) => a.matches(labels) && b.matches(labels),
            LabelQuery::Or(a, b) => a.matches(labels) || b.matches(labels),
        }
    }
}

fn tokenize_query(src: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in src.chars() {
        if c == '(' || c == ')' || c.is_whitespace() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            if !c.is_whitespace() {
                out.push(c.to_string());
            }
        } else {
            cur.push(c);
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

struct QueryParser {
    tokens: Vec<String>,
    pos: usize,
}

impl QueryParser {
    fn peek_kw(&self, kw: &str) -> bool {
        self.tokens.get(self.pos).is_some_and(|t| t.eq_ignore_ascii_case(kw))
    }

    fn or(&mut self) -> Result<LabelQuery> {
        let mut lhs = self.and()?;
        while self.peek_kw("OR") {
            self.pos += 1;
            lhs = LabelQuery::Or(Box::new(lhs), Box::new(self.and()?));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<LabelQuery> {
        let mut lhs = self.not()?;
        while self.peek_kw("AND") {
            self.pos += 1;
            lhs = LabelQuery::And(Box::new(lhs), Box::new(self.not()?));
        }
        Ok(lhs)
    }

    fn not(&mut self) -> Result<LabelQuery> {
        if self.peek_kw("NOT") {
            self.pos += 1;
            return Ok(LabelQuery::Not(Box::new(self.not()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<LabelQuery> {
        let tok = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| Error::LabelQuery("unexpected end of query".into()))?;
        self.pos += 1;
        if tok == "(" {
            let q = self.or()?;
            if self.tokens.get(self.pos).map(String::as_str) != Some(")") {
                return Err(Error::LabelQuery("missing ')'".into()));
            }
            self.pos += 1;
            return Ok(q);
        }
        if tok == ")" {
            return Err(Error::LabelQuery("unexpected ')'".into()));
        }
        Ok(LabelQuery::Tag(tok.parse()?))
    }
}

/// Ids of documents matching a label expression, in ascending order.
pub fn filter_by_labels(corpus: &Corpus, query: &str) -> Result<Vec<String>> {
    let q = LabelQuery::parse(query)?;
    Ok(corpus
        .documents()
        .filter(|d| q.matches(&d.labels))
        .map(|d| d.doc_id.clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, author: &str, title: &str, year: i32) -> Document {
        Document::new(id, author, year, "Texte.").with_title(title)
    }

    fn labelled(id: &str, canon: bool, adventure: bool) -> Document {
        Document::new(id, id, 1850, "x").with_labels(Labels {
            canon: Some(canon),
            adventure: Some(adventure),
        })
    }

    #[test]
    fn author_index_tracks_documents() {
        let mut c = Corpus::from_documents([doc("a", "hugo", "X", 1850), doc("b", "hugo", "Y", 1851)]).unwrap();
        assert_eq!(c.author_index()["hugo"].len(), 2);
        c.retain(|d| d.doc_id != "a");
        assert_eq!(c.author_index()["hugo"].len(), 1);
        c.retain(|_| false);
        assert!(c.author_index().is_empty());
    }

    #[test]
    fn duplicate_insert_fails() {
        let err = Corpus::from_documents([doc("n001", "a", "X", 1850), doc("n001", "b", "Y", 1851)]).unwrap_err();
        assert!(matches!(err, Error::DuplicateDocId(id) if id == "n001"));
    }

    #[test]
    fn title_normalization() {
        assert_eq!(normalize_title("Les Travailleurs de la mer"), "travailleurs de la mer");
        assert_eq!(normalize_title("LES TRAVAILLEURS DE LA MER."), "travailleurs de la mer");
        assert_eq!(normalize_title("L’Homme qui rit"), "homme qui rit");
        assert_eq!(normalize_title("La  Curée !"), "curée");
        // "Lettres" must not lose its leading "le".
        assert_eq!(normalize_title("Lettres persanes"), "lettres persanes");
    }

    #[test]
    fn dedup_keeps_first_edition() {
        let c = Corpus::from_documents([
            doc("t1894", "hugo", "Les Travailleurs de la mer", 1894),
            doc("t1866", "hugo", "Les travailleurs de la mer", 1866),
            doc("t1880", "hugo", "Travailleurs de la mer", 1880),
            doc("other", "zola", "Les travailleurs de la mer", 1890),
        ])
        .unwrap();
        let (d, log) = dedup(&c);
        assert_eq!(d.doc_ids(), vec!["other", "t1866"]);
        assert_eq!(log.len(), 2);
        assert!(log.iter().all(|r| r.kept == "t1866" && !r.tie));
    }

    #[test]
    fn dedup_identity_on_unique_titles() {
        let c = Corpus::from_documents([doc("a", "x", "Un", 1850), doc("b", "x", "Deux", 1850)]).unwrap();
        let (d, log) = dedup(&c);
        assert_eq!(d, c);
        assert!(log.is_empty());
    }

    #[test]
    fn dedup_tie_breaks_on_doc_id() {
        let c = Corpus::from_documents([doc("b", "x", "Même", 1870), doc("a", "x", "Même", 1870)]).unwrap();
        let (d, log) = dedup(&c);
        assert_eq!(d.doc_ids(), vec!["a"]);
        assert_eq!(
            log,
            vec![Removal {
                removed: "b".into(),
                kept: "a".into(),
                tie: true
            }]
        );
    }

    #[test]
    fn label_filters() {
        let c = Corpus::from_documents([
            labelled("c1", true, true),
            labelled("c2", true, false),
            labelled("a1", false, true),
            labelled("a2", false, false),
            labelled("a3", false, false),
        ])
        .unwrap();
        assert_eq!(filter_by_labels(&c, "canon").unwrap(), vec!["c1", "c2"]);
        assert_eq!(filter_by_labels(&c, "adventure AND canon").unwrap(), vec!["c1"]);
        assert_eq!(
            filter_by_labels(&c, "adventure OR canon").unwrap(),
            vec!["a1", "c1", "c2"]
        );
        assert_eq!(
            filter_by_labels(&c, "NOT (canon OR adventure)").unwrap(),
            vec!["a2", "a3"]
        );
        assert!(matches!(
            filter_by_labels(&c, "bestseller"),
            Err(Error::UnknownLabel(t)) if t == "bestseller"
        ));
        assert!(filter_by_labels(&c, "canon AND").is_err());
        assert!(filter_by_labels(&c, "(canon").is_err());
    }

    #[test]
    fn spans_are_validated() {
        let d = Document::new("d", "a", 1850, "Jean aime Marie");
        assert!(d.clone().with_name_spans(vec![(10, 15), (0, 4)]).is_ok());
        assert!(d.clone().with_name_spans(vec![(0, 5), (3, 8)]).is_err());
        assert!(d.clone().with_name_spans(vec![(10, 16)]).is_err());
        assert!(d.with_name_spans(vec![(4, 4)]).is_err());
    }
}
