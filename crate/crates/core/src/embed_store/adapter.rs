//! Out-of-process encoder protocol.
//!
//! The toolkit never runs a model itself. An encoder is any program that
//! reads `{"id": .., "text": ..}` objects, one per line, on stdin and writes
//! `{"id": .., "vector": [..]}` objects, one per line, on stdout. Responses
//! may arrive in any order but must cover every request exactly once.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use super::{EmbeddingMatrix, StoreError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeRequest {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeResponse {
    pub id: String,
    pub vector: Vec<f32>,
}

pub fn write_requests<W: Write>(requests: &[EncodeRequest], mut w: W) -> std::io::Result<()> {
    for r in requests {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Collects responses into a matrix. Row order follows `order` when given,
/// otherwise arrival order.
pub fn read_responses<R: BufRead>(
    reader: R,
    order: Option<&[String]>,
) -> Result<EmbeddingMatrix, StoreError> {
    let mut rows: Vec<(String, Vec<f32>)> = Vec::new();
    let mut dim = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| StoreError::Protocol(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let resp: EncodeResponse = serde_json::from_str(&line)
            .map_err(|e| StoreError::Protocol(format!("response line {}: {e}", i + 1)))?;
        let d = *dim.get_or_insert(resp.vector.len());
        if resp.vector.len() != d {
            return Err(StoreError::DimensionMismatch {
                expected: d,
                got: resp.vector.len(),
            });
        }
        rows.push((resp.id, resp.vector));
    }
    let dim = dim.unwrap_or(1);
    match order {
        None => EmbeddingMatrix::from_rows(dim, rows),
        Some(order) => {
            let mut by_id: HashMap<String, Vec<f32>> = HashMap::with_capacity(rows.len());
            for (id, v) in rows {
                if by_id.insert(id.clone(), v).is_some() {
                    return Err(StoreError::DuplicateId(id));
                }
            }
            let mut ordered = Vec::with_capacity(order.len());
            for id in order {
                let v = by_id
                    .remove(id)
                    .ok_or_else(|| StoreError::Protocol(format!("no response for {id:?}")))?;
                ordered.push((id.clone(), v));
            }
            if let Some(extra) = by_id.keys().min() {
                return Err(StoreError::Protocol(format!(
                    "response for unrequested id {extra:?}"
                )));
            }
            EmbeddingMatrix::from_rows(dim, ordered)
        }
    }
}

/// Runs `program args..`, streams the requests to it, and collects the
/// embeddings it returns in request order.
pub fn run_encoder(
    program: &str,
    args: &[String],
    requests: &[EncodeRequest],
) -> Result<EmbeddingMatrix, StoreError> {
    let io = |e: std::io::Error| StoreError::IoFailure {
        path: program.to_string(),
        message: e.to_string(),
    };
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .map_err(io)?;
    let stdin = child.stdin.take().expect("piped stdin");
    let payload = requests.to_vec();
    // Feed stdin from a separate thread so a chatty encoder cannot deadlock
    // against a full stdout pipe.
    let writer = std::thread::spawn(move || write_requests(&payload, std::io::BufWriter::new(stdin)));
    let stdout = child.stdout.take().expect("piped stdout");
    let order: Vec<String> = requests.iter().map(|r| r.id.clone()).collect();
    let result = read_responses(BufReader::new(stdout), Some(&order));
    writer
        .join()
        .map_err(|_| StoreError::Protocol("request writer panicked".into()))?
        .map_err(io)?;
    let status = child.wait().map_err(io)?;
    if !status.success() {
        return Err(StoreError::Protocol(format!("encoder exited with {status}")));
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn responses_reordered_to_requests() {
        let body = "{\"id\":\"b\",\"vector\":[3,4]}\n{\"id\":\"a\",\"vector\":[1,2]}\n";
        let order = vec!["a".to_string(), "b".to_string()];
        let m = read_responses(Cursor::new(body), Some(&order)).unwrap();
        assert_eq!(m.ids(), &order[..]);
        assert_eq!(m.lookup("a").unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn missing_response_is_protocol_error() {
        let body = "{\"id\":\"a\",\"vector\":[1,2]}\n";
        let order = vec!["a".to_string(), "b".to_string()];
        assert!(matches!(
            read_responses(Cursor::new(body), Some(&order)),
            Err(StoreError::Protocol(_))
        ));
    }

    #[test]
    fn ragged_vectors_rejected() {
        let body = "{\"id\":\"a\",\"vector\":[1,2]}\n{\"id\":\"b\",\"vector\":[1]}\n";
        assert!(matches!(
            read_responses(Cursor::new(body), None),
            Err(StoreError::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn requests_are_one_object_per_line() {
        let mut buf = Vec::new();
        write_requests(
            &[EncodeRequest {
                id: "x".into(),
                text: "hello\nworld".into(),
            }],
            &mut buf,
        )
        .unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "{\"id\":\"x\",\"text\":\"hello\\nworld\"}\n");
    }

    #[cfg(unix)]
    #[test]
    fn spawned_encoder_round_trip() {
        // An encoder that ignores the text and answers with the id's length.
        let script = r#"while IFS= read -r line; do
  id=$(printf '%s' "$line" | sed -e 's/.*"id":"\([^"]*\)".*/\1/')
  printf '{"id":"%s","vector":[%d,1]}\n' "$id" "${#id}"
done"#;
        let reqs = vec![
            EncodeRequest { id: "ab".into(), text: "x".into() },
            EncodeRequest { id: "abcd".into(), text: "y".into() },
        ];
        let m = run_encoder("sh", &["-c".into(), script.into()], &reqs).unwrap();
        assert_eq!(m.lookup("abcd").unwrap(), &[4.0, 1.0]);
        assert_eq!(m.lookup("ab").unwrap(), &[2.0, 1.0]);
    }
}
