//! Reader and writer for CoNLL-2009 style annotated sentences.
//!
//! One token per line, sentences separated by blank lines, lines starting
//! with `#` ignored. Columns are tab-separated (whitespace is accepted when a
//! line has no tab):
//!
//! | # | column   | used as                                               |
//! |---|----------|-------------------------------------------------------|
//! | 1 | ID       | 1-based position, must be consecutive                 |
//! | 2 | FORM     | surface token                                         |
//! | 3–8 | LEMMA … PFEAT | ignored                                      |
//! | 9 | HEAD     | syntactic head ID, `0` for root                       |
//! | 10 | PHEAD   | used when HEAD is `_`                                 |
//! | 11 | DEPREL  | dependency label of the HEAD edge                     |
//! | 12 | PDEPREL | used when DEPREL is `_`                               |
//! | 13 | FILLPRED | `Y` marks a predicate                                |
//! | 14 | PRED    | predicate sense, ignored                              |
//! | 15+ | APRED_k | role of this token for the k-th predicate, `_` if none |
//!
//! Every line of a sentence carries `14 + P` columns where `P` is the number
//! of `Y` rows. Each role entry becomes a semantic edge predicate → token;
//! all predicates of a sentence share one graph. An argument equal to its
//! own predicate is dropped because self-loops are supplied by the model.

use crate::error::{Error, Result};

const FIXED_COLUMNS: usize = 14;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub head: usize,
    pub dep: usize,
    pub label: String,
}

impl Edge {
    pub fn new(head: usize, dep: usize, label: impl Into<String>) -> Self {
        Edge {
            head,
            dep,
            label: label.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AnnotatedSentence {
    pub tokens: Vec<String>,
    /// predicate → argument, labeled with the semantic role
    pub sem_edges: Vec<Edge>,
    /// head → dependent, labeled with the dependency relation
    pub syn_edges: Vec<Edge>,
}

impl AnnotatedSentence {
    pub fn plain(tokens: Vec<String>) -> Self {
        AnnotatedSentence {
            tokens,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Checks index bounds and the absence of self-referential edges.
    pub fn validate(&self) -> Result<()> {
        let n = self.tokens.len();
        for (kind, edges) in [("semantic", &self.sem_edges), ("syntactic", &self.syn_edges)] {
            for e in edges {
                if e.head >= n || e.dep >= n {
                    return Err(Error::Data(format!(
                        "{kind} edge {}→{} out of range for {n} tokens",
                        e.head, e.dep
                    )));
                }
                if e.head == e.dep {
                    return Err(Error::Data(format!("{kind} self-edge at {}", e.head)));
                }
            }
        }
        Ok(())
    }
}

fn split_columns(line: &str) -> Vec<&str> {
    if line.contains('\t') {
        line.split('\t').map(str::trim).collect()
    } else {
        line.split_whitespace().collect()
    }
}

fn pick<'a>(gold: &'a str, predicted: &'a str) -> &'a str {
    if gold == "_" {
        predicted
    } else {
        gold
    }
}

/// Parses every sentence block in `text`.
pub fn ingest_conll(text: &str) -> Result<Vec<AnnotatedSentence>> {
    let mut sentences = Vec::new();
    let mut block: Vec<(usize, Vec<&str>)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            if !block.is_empty() {
                sentences.push(parse_block(&block)?);
                block.clear();
            }
            continue;
        }
        if trimmed.starts_with('#') {
            continue;
        }
        block.push((line_no, split_columns(trimmed)));
    }
    if !block.is_empty() {
        sentences.push(parse_block(&block)?);
    }
    Ok(sentences)
}

fn parse_block(rows: &[(usize, Vec<&str>)]) -> Result<AnnotatedSentence> {
    let n = rows.len();
    let predicates: Vec<usize> = rows
        .iter()
        .enumerate()
        .filter(|(_, (_, cols))| cols.get(12) == Some(&"Y"))
        .map(|(pos, _)| pos)
        .collect();
    let width = FIXED_COLUMNS + predicates.len();

    let mut sentence = AnnotatedSentence::default();
    for (pos, (line, cols)) in rows.iter().enumerate() {
        if cols.len() != width {
            return Err(Error::parse(
                *line,
                format!("expected {width} columns ({} predicates), found {}", predicates.len(), cols.len()),
            ));
        }
        let id: usize = cols[0]
            .parse()
            .map_err(|_| Error::parse(*line, format!("bad token id `{}`", cols[0])))?;
        if id != pos + 1 {
            return Err(Error::parse(*line, format!("token id {id} where {} expected", pos + 1)));
        }
        sentence.tokens.push(cols[1].to_string());

        let head = pick(cols[8], cols[9]);
        if head != "_" {
            let head: usize = head
                .parse()
                .map_err(|_| Error::parse(*line, format!("bad head `{head}`")))?;
            if head > n {
                return Err(Error::parse(*line, format!("head {head} out of range for {n} tokens")));
            }
            if head == id {
                return Err(Error::parse(*line, "token is its own head"));
            }
            if head > 0 {
                let label = pick(cols[10], cols[11]);
                if label == "_" {
                    return Err(Error::parse(*line, "missing dependency label"));
                }
                sentence.syn_edges.push(Edge::new(head - 1, pos, label));
            }
        }
    }
    for (k, &pred) in predicates.iter().enumerate() {
        for (pos, (_, cols)) in rows.iter().enumerate() {
            let role = cols[FIXED_COLUMNS + k];
            if role != "_" && pos != pred {
                sentence.sem_edges.push(Edge::new(pred, pos, role));
            }
        }
    }
    Ok(sentence)
}

/// Writes sentences in the same column format. Fails when a token has more
/// than one syntactic head or a predicate–argument pair carries two roles,
/// neither of which the format can express.
pub fn serialize_conll(sentences: &[AnnotatedSentence]) -> Result<String> {
    let mut out = String::new();
    for (si, s) in sentences.iter().enumerate() {
        s.validate()?;
        let n = s.tokens.len();
        let mut heads: Vec<Option<(usize, &str)>> = vec![None; n];
        for e in &s.syn_edges {
            if heads[e.dep].replace((e.head, &e.label)).is_some() {
                return Err(Error::Data(format!("sentence {si}: token {} has two heads", e.dep)));
            }
        }
        let mut predicates: Vec<usize> = s.sem_edges.iter().map(|e| e.head).collect();
        predicates.sort_unstable();
        predicates.dedup();
        let mut roles = vec![vec!["_"; predicates.len()]; n];
        for e in &s.sem_edges {
            let k = predicates.binary_search(&e.head).unwrap();
            if roles[e.dep][k] != "_" {
                return Err(Error::Data(format!(
                    "sentence {si}: pair {}→{} has two roles",
                    e.head, e.dep
                )));
            }
            roles[e.dep][k] = &e.label;
        }
        for (pos, token) in s.tokens.iter().enumerate() {
            let (head, deprel) = match heads[pos] {
                Some((h, l)) => ((h + 1).to_string(), l),
                None => ("0".to_string(), "_"),
            };
            let is_pred = predicates.binary_search(&pos).is_ok();
            let (fill, sense) = if is_pred { ("Y", token.as_str()) } else { ("_", "_") };
            let mut cols: Vec<&str> = vec![];
            let id = (pos + 1).to_string();
            cols.extend([id.as_str(), token, "_", "_", "_", "_", "_", "_"]);
            cols.extend([head.as_str(), "_", deprel, "_", fill, sense]);
            cols.extend(roles[pos].iter().copied());
            out.push_str(&cols.join("\t"));
            out.push('\n');
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const JOHN_GAVE: &str = "\
1\tJohn\tjohn\tjohn\tNNP\tNNP\t_\t_\t2\t2\tSBJ\tSBJ\t_\t_\tA0
2\tgave\tgive\tgive\tVBD\tVBD\t_\t_\t0\t0\tROOT\tROOT\tY\tgive.01\t_
3\this\this\this\tPRP$\tPRP$\t_\t_\t4\t4\tNMOD\tNMOD\t_\t_\t_
4\twife\twife\twife\tNN\tNN\t_\t_\t2\t2\tIOBJ\tIOBJ\t_\t_\tA2
5\ta\ta\ta\tDT\tDT\t_\t_\t7\t7\tNMOD\tNMOD\t_\t_\t_
6\tnice\tnice\tnice\tJJ\tJJ\t_\t_\t7\t7\tNMOD\tNMOD\t_\t_\t_
7\tpresent\tpresent\tpresent\tNN\tNN\t_\t_\t2\t2\tOBJ\tOBJ\t_\t_\tA1
8\t.\t.\t.\t.\t.\t_\t_\t2\t2\tP\tP\t_\t_\t_
";

    #[test]
    fn gave_has_three_arguments() {
        let s = &ingest_conll(JOHN_GAVE).unwrap()[0];
        assert_eq!(s.tokens.len(), 8);
        assert_eq!(
            s.sem_edges,
            vec![Edge::new(1, 0, "A0"), Edge::new(1, 3, "A2"), Edge::new(1, 6, "A1")]
        );
        assert_eq!(s.syn_edges.len(), 7);
        assert!(s.syn_edges.contains(&Edge::new(1, 6, "OBJ")));
    }

    #[test]
    fn single_token_without_predicate() {
        let s = ingest_conll("1\tHi\t_\t_\t_\t_\t_\t_\t0\t_\tROOT\t_\t_\t_\n").unwrap();
        assert_eq!(s.len(), 1);
        assert!(s[0].sem_edges.is_empty() && s[0].syn_edges.is_empty());
    }

    #[test]
    fn out_of_range_head_reports_line() {
        let mut text = String::new();
        for i in 1..=5 {
            let head = if i == 3 { 7 } else { 0 };
            text.push_str(&format!("{i}\tw{i}\t_\t_\t_\t_\t_\t_\t{head}\t_\tDEP\t_\t_\t_\n"));
        }
        let err = ingest_conll(&format!("# header\n{text}")).unwrap_err();
        match err {
            Error::Parse { line, msg } => {
                assert_eq!(line, 4);
                assert!(msg.contains("out of range"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_columns_rejected() {
        let text = "1\tA\t_\t_\t_\t_\t_\t_\t0\t_\tROOT\t_\tY\ta.01\t_\n2\tB\t_\t_\t_\t_\t_\t_\t1\t_\tOBJ\t_\t_\t_\n";
        let err = ingest_conll(text).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn predicted_columns_used_when_gold_missing() {
        let text = "1\tA\t_\t_\t_\t_\t_\t_\t_\t2\t_\tSBJ\t_\t_\n2\tB\t_\t_\t_\t_\t_\t_\t_\t0\t_\tROOT\t_\t_\n";
        let s = &ingest_conll(text).unwrap()[0];
        assert_eq!(s.syn_edges, vec![Edge::new(1, 0, "SBJ")]);
    }

    #[test]
    fn multiple_predicates_share_one_graph() {
        let text = "\
1\tJohn\t_\t_\t_\t_\t_\t_\t2\t_\tSBJ\t_\t_\t_\tA0\tA0
2\tsold\t_\t_\t_\t_\t_\t_\t0\t_\tROOT\t_\tY\tsell.01\t_\t_
3\tand\t_\t_\t_\t_\t_\t_\t2\t_\tCOORD\t_\t_\t_\t_\t_
4\tleft\t_\t_\t_\t_\t_\t_\t3\t_\tCONJ\t_\tY\tleave.01\t_\t_
";
        let s = &ingest_conll(text).unwrap()[0];
        assert_eq!(s.sem_edges, vec![Edge::new(1, 0, "A0"), Edge::new(3, 0, "A0")]);
    }

    #[test]
    fn serialize_then_ingest_is_identity() {
        let original = ingest_conll(JOHN_GAVE).unwrap();
        let text = serialize_conll(&original).unwrap();
        assert_eq!(ingest_conll(&text).unwrap(), original);
    }

    #[test]
    fn two_heads_cannot_be_serialized() {
        let s = AnnotatedSentence {
            tokens: vec!["a".into(), "b".into(), "c".into()],
            sem_edges: vec![],
            syn_edges: vec![Edge::new(0, 2, "X"), Edge::new(1, 2, "Y")],
        };
        assert!(serialize_conll(&[s]).is_err());
    }
}
