//! Line-oriented file formats: corpus, query and dense-vector JSON lines,
//! TREC runs and qrels, and cluster/segment assignment TSV.
//!
//! Parsers take one line at a time so callers (and fuzzers) can feed
//! arbitrary input; the `read_*` wrappers attach line numbers to errors.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::Deserialize;
use thiserror::Error;

use crate::clustering::{ClusterAssignment, ClusterError, DenseVector, SegmentAssignment, SegmentMethod};
use crate::eval::Qrels;
use crate::index::RawDoc;
use crate::retrieval::SearchReport;
use crate::types::{DocId, Query, Score, SparseVector, TermId, END_DOC, MAX_WEIGHT};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{file} line {line}: {message}")]
    Parse { file: String, line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl IoError {
    fn at(file: &str, line: usize, message: impl fmt::Display) -> Self {
        IoError::Parse { file: file.to_string(), line, message: message.to_string() }
    }
}

pub fn open(path: &Path) -> Result<BufReader<File>, IoError> {
    File::open(path).map(BufReader::new).map_err(|source| IoError::File { path: path.display().to_string(), source })
}

pub fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    File::create(path).map(BufWriter::new).map_err(|source| IoError::File { path: path.display().to_string(), source })
}

/// Feeds each non-blank line with its 1-based number to `f`.
fn for_each_line<R: BufRead>(input: R, mut f: impl FnMut(usize, &str) -> Result<(), String>, file: &str) -> Result<(), IoError> {
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        f(i + 1, trimmed).map_err(|m| IoError::at(file, i + 1, m))?;
    }
    Ok(())
}

/// JSON object with numeric-string keys, duplicates rejected.
struct TermMap<V>(Vec<(TermId, V)>);

impl<'de, V: Deserialize<'de>> Deserialize<'de> for TermMap<V> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V_<V>(std::marker::PhantomData<V>);
        impl<'de, V: Deserialize<'de>> Visitor<'de> for V_<V> {
            type Value = TermMap<V>;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object mapping term ids to weights")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                let mut seen = HashSet::new();
                while let Some(key) = map.next_key::<std::borrow::Cow<'de, str>>()? {
                    let term: TermId = key.parse().map_err(|_| de::Error::custom(format!("term id `{key}` is not a 32-bit unsigned integer")))?;
                    if !seen.insert(term) {
                        return Err(de::Error::custom(format!("duplicate term {term}")));
                    }
                    out.push((term, map.next_value()?));
                }
                Ok(TermMap(out))
            }
        }
        d.deserialize_map(V_(std::marker::PhantomData))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusLine {
    doc_id: DocId,
    terms: TermMap<f32>,
}

pub fn parse_corpus_line(line: &str) -> Result<RawDoc, String> {
    let parsed: CorpusLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if parsed.doc_id == END_DOC {
        return Err(format!("doc id {END_DOC} is reserved"));
    }
    let mut terms = parsed.terms.0;
    if let Some(&(t, w)) = terms.iter().find(|(_, w)| !(w.is_finite() && *w >= 0.0)) {
        return Err(format!("term {t} has invalid weight {w}"));
    }
    terms.sort_by_key(|&(t, _)| t);
    Ok(RawDoc { doc_id: parsed.doc_id, terms })
}

/// Terms in ascending numeric order; weights in shortest round-trip form.
pub fn format_corpus_line(doc: &RawDoc) -> String {
    let mut terms = doc.terms.clone();
    terms.sort_by_key(|&(t, _)| t);
    let body: Vec<String> = terms.iter().map(|(t, w)| format!("\"{t}\":{}", fmt_f32(*w))).collect();
    format!("{{\"doc_id\":{},\"terms\":{{{}}}}}", doc.doc_id, body.join(","))
}

fn fmt_f32(w: f32) -> String {
    let s = format!("{w}");
    if s.contains(['.', 'e', 'E']) || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

pub fn read_corpus<R: BufRead>(input: R) -> Result<Vec<RawDoc>, IoError> {
    let mut docs = Vec::new();
    for_each_line(input, |_, l| parse_corpus_line(l).map(|d| docs.push(d)), "corpus")?;
    Ok(docs)
}

pub fn write_corpus<W: Write + ?Sized>(out: &mut W, docs: &[RawDoc]) -> std::io::Result<()> {
    for d in docs {
        writeln!(out, "{}", format_corpus_line(d))?;
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum QueryId {
    Text(String),
    Number(u64),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryLine {
    query_id: QueryId,
    terms: TermMap<u32>,
}

pub fn parse_query_line(line: &str) -> Result<Query, String> {
    let parsed: QueryLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let query_id = match parsed.query_id {
        QueryId::Text(s) => s,
        QueryId::Number(n) => n.to_string(),
    };
    if query_id.is_empty() || query_id.chars().any(char::is_whitespace) {
        return Err(format!("query id `{query_id}` must be non-empty without whitespace"));
    }
    if let Some(&(t, w)) = parsed.terms.0.iter().find(|&&(_, w)| w > MAX_WEIGHT) {
        return Err(format!("term {t} weight {w} exceeds {MAX_WEIGHT}"));
    }
    let vector = SparseVector::new(parsed.terms.0).map_err(|e| e.to_string())?;
    Ok(Query::new(query_id, vector))
}

pub fn format_query_line(query: &Query) -> String {
    let body: Vec<String> = query.vector.entries().iter().map(|(t, w)| format!("\"{t}\":{w}")).collect();
    format!("{{\"query_id\":{},\"terms\":{{{}}}}}", serde_json::to_string(&query.query_id).expect("string serializes"), body.join(","))
}

/// Rejects duplicate query ids.
pub fn read_queries<R: BufRead>(input: R) -> Result<Vec<Query>, IoError> {
    let mut queries = Vec::new();
    let mut seen = HashSet::new();
    for_each_line(
        input,
        |_, l| {
            let q = parse_query_line(l)?;
            if !seen.insert(q.query_id.clone()) {
                return Err(format!("duplicate query id `{}`", q.query_id));
            }
            queries.push(q);
            Ok(())
        },
        "queries",
    )?;
    Ok(queries)
}

pub fn write_queries<W: Write + ?Sized>(out: &mut W, queries: &[Query]) -> std::io::Result<()> {
    for q in queries {
        writeln!(out, "{}", format_query_line(q))?;
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DenseLine {
    doc_id: DocId,
    vector: Vec<f32>,
}

pub fn parse_dense_line(line: &str) -> Result<(DocId, DenseVector), String> {
    let parsed: DenseLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let v = DenseVector(parsed.vector);
    if v.dims() == 0 || !v.is_finite() {
        return Err(format!("doc {} has an empty or non-finite vector", parsed.doc_id));
    }
    Ok((parsed.doc_id, v))
}

pub fn format_dense_line(doc: DocId, v: &DenseVector) -> String {
    let body: Vec<String> = v.values().iter().map(|x| fmt_f32(*x)).collect();
    format!("{{\"doc_id\":{doc},\"vector\":[{}]}}", body.join(","))
}

/// All vectors must share one dimensionality.
pub fn read_dense<R: BufRead>(input: R) -> Result<Vec<(DocId, DenseVector)>, IoError> {
    let mut out: Vec<(DocId, DenseVector)> = Vec::new();
    for_each_line(
        input,
        |_, l| {
            let (d, v) = parse_dense_line(l)?;
            if let Some((_, first)) = out.first() {
                if first.dims() != v.dims() {
                    return Err(format!("doc {d} has {} dims, expected {}", v.dims(), first.dims()));
                }
            }
            out.push((d, v));
            Ok(())
        },
        "dense",
    )?;
    Ok(out)
}

pub fn write_dense<W: Write + ?Sized>(out: &mut W, vectors: &[(DocId, DenseVector)]) -> std::io::Result<()> {
    for (d, v) in vectors {
        writeln!(out, "{}", format_dense_line(*d, v))?;
    }
    Ok(())
}

/// One line of a TREC run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunLine {
    pub query_id: String,
    pub doc_id: DocId,
    pub rank: u32,
    pub score: Score,
    pub tag: String,
}

/// `qid Q0 docid rank score tag`, rank from 1; the score is the integer
/// fixed-point rank score.
pub fn write_run<W: Write + ?Sized>(out: &mut W, report: &SearchReport, tag: &str) -> std::io::Result<()> {
    for (i, d) in report.results.iter().enumerate() {
        writeln!(out, "{} Q0 {} {} {} {}", report.query_id, d.doc_id, i + 1, d.score, tag)?;
    }
    Ok(())
}

pub fn parse_run_line(line: &str) -> Result<RunLine, String> {
    let f: Vec<&str> = line.split_whitespace().collect();
    if f.len() != 6 {
        return Err(format!("expected 6 fields, found {}", f.len()));
    }
    if f[1] != "Q0" {
        return Err(format!("second field must be Q0, found `{}`", f[1]));
    }
    let num = |s: &str, what: &str| s.parse::<u64>().map_err(|_| format!("bad {what} `{s}`"));
    let doc_id = num(f[2], "doc id")?;
    let rank = num(f[3], "rank")?;
    if doc_id >= END_DOC as u64 || rank == 0 || rank > u32::MAX as u64 {
        return Err(format!("doc id or rank out of range in `{line}`"));
    }
    Ok(RunLine { query_id: f[0].to_string(), doc_id: doc_id as DocId, rank: rank as u32, score: num(f[4], "score")?, tag: f[5].to_string() })
}

/// Runs grouped by query in first-appearance order, each sorted by rank.
pub fn read_run<R: BufRead>(input: R) -> Result<Vec<(String, Vec<RunLine>)>, IoError> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<RunLine>> = BTreeMap::new();
    for_each_line(
        input,
        |_, l| {
            let r = parse_run_line(l)?;
            let g = groups.entry(r.query_id.clone()).or_insert_with(|| {
                order.push(r.query_id.clone());
                Vec::new()
            });
            if g.iter().any(|x| x.doc_id == r.doc_id || x.rank == r.rank) {
                return Err(format!("duplicate doc or rank for query `{}`", r.query_id));
            }
            g.push(r);
            Ok(())
        },
        "run",
    )?;
    Ok(order
        .into_iter()
        .map(|q| {
            let mut g = groups.remove(&q).unwrap_or_default();
            g.sort_by_key(|r| r.rank);
            (q, g)
        })
        .collect())
}

/// `qid 0 docid grade`.
pub fn parse_qrels_line(line: &str) -> Result<(String, DocId, u32), String> {
    let f: Vec<&str> = line.split_whitespace().collect();
    if f.len() != 4 {
        return Err(format!("expected 4 fields, found {}", f.len()));
    }
    let doc: DocId = f[2].parse().map_err(|_| format!("bad doc id `{}`", f[2]))?;
    let grade: u32 = f[3].parse().map_err(|_| format!("bad grade `{}`", f[3]))?;
    Ok((f[0].to_string(), doc, grade))
}

pub fn read_qrels<R: BufRead>(input: R) -> Result<Qrels, IoError> {
    let mut qrels = Qrels::default();
    for_each_line(
        input,
        |_, l| {
            let (q, d, g) = parse_qrels_line(l)?;
            qrels.insert(&q, d, g).map_err(|e| e.to_string())
        },
        "qrels",
    )?;
    Ok(qrels)
}

pub fn write_qrels<W: Write + ?Sized>(out: &mut W, qrels: &Qrels) -> std::io::Result<()> {
    for (q, d, g) in qrels.iter() {
        writeln!(out, "{q} 0 {d} {g}")?;
    }
    Ok(())
}

/// Header of an assignment file: `# m=<m> n=<n> method=<method>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AssignmentHeader {
    pub m: u32,
    pub n: u32,
    pub method: SegmentMethod,
}

pub fn parse_assignment_header(line: &str) -> Result<AssignmentHeader, String> {
    let rest = line.strip_prefix('#').ok_or("header must start with `#`")?;
    let (mut m, mut n, mut method) = (None, None, None);
    for field in rest.split_whitespace() {
        let (k, v) = field.split_once('=').ok_or_else(|| format!("bad header field `{field}`"))?;
        match k {
            "m" => m = Some(v.parse::<u32>().map_err(|_| format!("bad m `{v}`"))?),
            "n" => n = Some(v.parse::<u32>().map_err(|_| format!("bad n `{v}`"))?),
            "method" => method = Some(v.parse::<SegmentMethod>()?),
            _ => return Err(format!("unknown header field `{k}`")),
        }
    }
    match (m, n, method) {
        (Some(m), Some(n), Some(method)) if m > 0 && n > 0 => Ok(AssignmentHeader { m, n, method }),
        _ => Err("header needs positive m, n and a method".into()),
    }
}

/// `doc_id \t cluster_id \t segment_id`.
pub fn parse_assignment_line(line: &str) -> Result<(DocId, u32, u32), String> {
    let f: Vec<&str> = line.split('\t').map(str::trim).collect();
    if f.len() != 3 {
        return Err(format!("expected 3 tab-separated fields, found {}", f.len()));
    }
    let p = |s: &str| s.parse::<u32>().map_err(|_| format!("bad integer `{s}`"));
    Ok((p(f[0])?, p(f[1])?, p(f[2])?))
}

/// Without a header, `m` and `n` are one more than the largest labels seen.
pub fn read_assignment<R: BufRead>(input: R) -> Result<(ClusterAssignment, SegmentAssignment), IoError> {
    let mut header = None;
    let mut rows = Vec::new();
    for_each_line(
        input,
        |_, l| {
            if l.starts_with('#') {
                if header.is_some() || !rows.is_empty() {
                    return Err("header must be the first line".into());
                }
                header = Some(parse_assignment_header(l)?);
            } else {
                rows.push(parse_assignment_line(l)?);
            }
            Ok(())
        },
        "assignment",
    )?;
    let invalid = |e: ClusterError| IoError::Invalid(format!("assignment: {e}"));
    let (m, n, method) = match header {
        Some(h) => (h.m, h.n, h.method),
        None => (
            rows.iter().map(|r| r.1.saturating_add(1)).max().unwrap_or(1),
            rows.iter().map(|r| r.2.saturating_add(1)).max().unwrap_or(1),
            SegmentMethod::RandomUniform,
        ),
    };
    let limit = rows.len().max(1);
    if m as usize > limit || n as usize > limit {
        return Err(IoError::Invalid(format!("assignment: m={m} and n={n} may not exceed the document count {}", rows.len())));
    }
    let clusters = ClusterAssignment::new(m, rows.iter().map(|r| (r.0, r.1)).collect()).map_err(invalid)?;
    let segments = SegmentAssignment::new(n, method, rows.iter().map(|r| (r.0, r.2)).collect()).map_err(invalid)?;
    Ok((clusters, segments))
}

pub fn write_assignment<W: Write + ?Sized>(out: &mut W, clusters: &ClusterAssignment, segments: &SegmentAssignment) -> Result<(), IoError> {
    writeln!(out, "# m={} n={} method={}", clusters.m(), segments.n(), segments.method())?;
    for &(doc, c) in clusters.labels() {
        let s = segments.segment_of(doc).ok_or_else(|| IoError::Invalid(format!("document {doc} has no segment")))?;
        writeln!(out, "{doc}\t{c}\t{s}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ScoredDoc;

    #[test]
    fn corpus_line_roundtrip() {
        let doc = RawDoc { doc_id: 7, terms: vec![(10, 0.25), (2, 1.5), (100, 3.0)] };
        let line = format_corpus_line(&doc);
        assert_eq!(line, r#"{"doc_id":7,"terms":{"2":1.5,"10":0.25,"100":3.0}}"#);
        let back = parse_corpus_line(&line).unwrap();
        assert_eq!(back.terms, vec![(2, 1.5), (10, 0.25), (100, 3.0)]);
        let tiny = RawDoc { doc_id: 1, terms: vec![(0, 1.0e-7), (1, 0.1)] };
        assert_eq!(parse_corpus_line(&format_corpus_line(&tiny)).unwrap(), tiny);
    }

    #[test]
    fn corpus_line_errors() {
        for bad in [
            r#"{"doc_id":1,"terms":{"2":1,"2":3}}"#,
            r#"{"doc_id":1,"terms":{"x":1}}"#,
            r#"{"doc_id":1,"terms":{"2":-1}}"#,
            r#"{"doc_id":4294967295,"terms":{}}"#,
            r#"{"doc_id":1}"#,
            r#"{"doc_id":1,"terms":{},"extra":0}"#,
            "not json",
        ] {
            assert!(parse_corpus_line(bad).is_err(), "{bad}");
        }
        let err = read_corpus("{\"doc_id\":1,\"terms\":{}}\n\n{oops}\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn query_lines() {
        let q = parse_query_line(r#"{"query_id":"q1","terms":{"5":2,"1":1,"9":0}}"#).unwrap();
        assert_eq!(q.query_id, "q1");
        assert_eq!(q.vector.entries(), &[(1, 1), (5, 2)]);
        assert_eq!(parse_query_line(&format_query_line(&q)).unwrap(), q);
        assert_eq!(parse_query_line(r#"{"query_id":12,"terms":{}}"#).unwrap().query_id, "12");
        assert!(parse_query_line(r#"{"query_id":"a b","terms":{}}"#).is_err());
        assert!(parse_query_line(r#"{"query_id":"a","terms":{"1":70000}}"#).is_err());
        assert!(read_queries("{\"query_id\":\"a\",\"terms\":{}}\n{\"query_id\":\"a\",\"terms\":{}}\n".as_bytes()).is_err());
    }

    #[test]
    fn dense_lines() {
        let v = DenseVector(vec![0.5, -1.0, 2.0e-3]);
        let line = format_dense_line(3, &v);
        assert_eq!(parse_dense_line(&line).unwrap(), (3, v));
        assert!(parse_dense_line(r#"{"doc_id":1,"vector":[]}"#).is_err());
        let mixed = "{\"doc_id\":1,\"vector\":[1.0]}\n{\"doc_id\":2,\"vector\":[1.0,2.0]}\n";
        assert!(read_dense(mixed.as_bytes()).unwrap_err().to_string().contains("line 2"));
    }

    #[test]
    fn run_roundtrip() {
        let corpus = vec![(1, SparseVector::new([(3, 50)]).unwrap()), (4, SparseVector::new([(3, 99)]).unwrap())];
        let q = Query::from_terms("q7", &[3]).unwrap();
        let report = crate::retrieval::search_exhaustive_corpus(&corpus, &q, 5).unwrap();
        assert_eq!(report.results, vec![ScoredDoc::new(4, 99), ScoredDoc::new(1, 50)]);
        let mut buf = Vec::new();
        write_run(&mut buf, &report, "asc").unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "q7 Q0 4 1 99 asc\nq7 Q0 1 2 50 asc\n");
        let runs = read_run(&buf[..]).unwrap();
        assert_eq!(runs.len(), 1);
        assert_eq!(runs[0].1.iter().map(|r| r.doc_id).collect::<Vec<_>>(), vec![4, 1]);
        assert!(parse_run_line("q Q1 1 1 1 t").is_err());
        assert!(parse_run_line("q Q0 1 0 1 t").is_err());
        assert!(read_run("q Q0 1 1 5 t\nq Q0 1 2 4 t\n".as_bytes()).is_err());
    }

    #[test]
    fn qrels_roundtrip() {
        let text = "q1 0 5 1\nq1 0 2 0\nq2 0 9 3\n";
        let qrels = read_qrels(text.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_qrels(&mut buf, &qrels).unwrap();
        assert_eq!(read_qrels(&buf[..]).unwrap(), qrels);
        assert!(read_qrels("q1 0 5\n".as_bytes()).is_err());
        assert!(read_qrels("q1 0 5 -1\n".as_bytes()).is_err());
    }

    #[test]
    fn assignment_roundtrip() {
        let clusters = ClusterAssignment::new(3, vec![(1, 0), (2, 2), (5, 1)]).unwrap();
        let segments = SegmentAssignment::new(2, SegmentMethod::KMeansSub, vec![(1, 1), (2, 0), (5, 0)]).unwrap();
        let mut buf = Vec::new();
        write_assignment(&mut buf, &clusters, &segments).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "# m=3 n=2 method=kmeans\n1\t0\t1\n2\t2\t0\n5\t1\t0\n");
        let (c, s) = read_assignment(&buf[..]).unwrap();
        assert_eq!((c, s), (clusters, segments));
        let (c, s) = read_assignment("1\t0\t0\n2\t1\t1\n3\t1\t0\n".as_bytes()).unwrap();
        assert_eq!((c.m(), s.n()), (2, 2));
        assert!(read_assignment("1\t0\t0\n2\t3\t1\n".as_bytes()).is_err());
        assert!(read_assignment("1\t4294967295\t0\n".as_bytes()).is_err());
        assert!(read_assignment("# m=4000000000 n=1 method=random\n1\t0\t0\n".as_bytes()).is_err());
        assert!(read_assignment("# m=2 n=1 method=random\n1\t2\t0\n".as_bytes()).is_err());
        assert!(read_assignment("1\t0\t0\n# m=2 n=1 method=random\n".as_bytes()).is_err());
        assert!(read_assignment("1 0 0\n".as_bytes()).is_err());
    }
}
