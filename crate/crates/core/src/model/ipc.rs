//! Newline-delimited JSON protocol for querying a model in another process.
//!
//! Requests:
//!
//! ```text
//! {"op":"recommend","items":[3,1,4],"k":5}
//! {"op":"attention","items":[3,1,4,9]}
//! ```
//!
//! Responses are `{"top_k":[{"item":..,"score":..},..]}`,
//! `{"attention":[[..],..]}` (optionally with `"synthetic":true`) or
//! `{"error":"..."}`. One request is in flight per connection.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ModelError, Recommender, Scored, F17};
use crate::ci::{matrix_from_rows, AttentionMatrix};
use crate::graph::ItemId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum IpcRequest {
    Recommend { items: Vec<ItemId>, k: usize },
    Attention { items: Vec<ItemId> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IpcResponse {
    TopK {
        top_k: Vec<Scored>,
    },
    Attention {
        attention: Vec<Vec<F17>>,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        synthetic: bool,
    },
    Error {
        error: String,
    },
}

impl IpcResponse {
    fn from_attention(a: &AttentionMatrix) -> Self {
        IpcResponse::Attention {
            attention: a
                .to_rows()
                .into_iter()
                .map(|r| r.into_iter().map(F17).collect())
                .collect(),
            synthetic: a.is_synthetic(),
        }
    }
}

/// Answers one request line; malformed input becomes an error response.
pub fn handle_line<M: Recommender + ?Sized>(model: &M, line: &str) -> IpcResponse {
    let request: IpcRequest = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(e) => {
            return IpcResponse::Error {
                error: format!("malformed request: {e}"),
            }
        }
    };
    let result = match request {
        IpcRequest::Recommend { items, k } => {
            model.recommend(&items, k).map(|top_k| IpcResponse::TopK { top_k })
        }
        IpcRequest::Attention { items } => model.attention(&items).map(|a| IpcResponse::from_attention(&a)),
    };
    result.unwrap_or_else(|e| IpcResponse::Error { error: e.to_string() })
}

/// Serves requests from `input` until end of stream.
pub fn serve<M, R, W>(model: &M, input: R, mut output: W) -> std::io::Result<()>
where
    M: Recommender + ?Sized,
    R: BufRead,
    W: Write,
{
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = handle_line(model, &line);
        let text = serde_json::to_string(&response).unwrap_or_else(|e| {
            serde_json::json!({ "error": format!("cannot encode response: {e}") }).to_string()
        });
        writeln!(output, "{text}")?;
        output.flush()?;
    }
    Ok(())
}

struct Connection {
    writer: Box<dyn Write + Send>,
    reader: Box<dyn BufRead + Send>,
    child: Option<Child>,
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(mut child) = self.child.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Client side of the protocol.
pub struct IpcClient {
    conn: Mutex<Connection>,
}

impl std::fmt::Debug for IpcClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IpcClient").finish_non_exhaustive()
    }
}

impl IpcClient {
    /// Starts `command` through `sh -c` and talks to its standard streams.
    pub fn spawn(command: &str) -> Result<Self, ModelError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ModelError::Transport(format!("cannot start `{command}`: {e}")))?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        Ok(IpcClient {
            conn: Mutex::new(Connection {
                writer: Box::new(stdin),
                reader: Box::new(BufReader::new(stdout)),
                child: Some(child),
            }),
        })
    }

    pub fn from_streams<W, R>(writer: W, reader: R) -> Self
    where
        W: Write + Send + 'static,
        R: BufRead + Send + 'static,
    {
        IpcClient {
            conn: Mutex::new(Connection {
                writer: Box::new(writer),
                reader: Box::new(reader),
                child: None,
            }),
        }
    }

    /// Sends one line and returns the response line without its newline.
    pub fn raw_request(&self, line: &str) -> Result<String, ModelError> {
        if line.contains('\n') {
            return Err(ModelError::Protocol("request spans several lines".into()));
        }
        let mut conn = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        let transport = |e: std::io::Error| ModelError::Transport(e.to_string());
        writeln!(conn.writer, "{line}").map_err(transport)?;
        conn.writer.flush().map_err(transport)?;
        let mut response = String::new();
        let n = conn.reader.read_line(&mut response).map_err(transport)?;
        if n == 0 || !response.ends_with('\n') {
            return Err(ModelError::Transport("connection closed mid-response".into()));
        }
        response.pop();
        if response.ends_with('\r') {
            response.pop();
        }
        Ok(response)
    }

    pub fn request(&self, request: &IpcRequest) -> Result<IpcResponse, ModelError> {
        let line = serde_json::to_string(request).map_err(|e| ModelError::Protocol(e.to_string()))?;
        let response = self.raw_request(&line)?;
        let parsed: IpcResponse = serde_json::from_str(&response)
            .map_err(|e| ModelError::Protocol(format!("unparseable response `{response}`: {e}")))?;
        match parsed {
            IpcResponse::Error { error } => Err(ModelError::Remote(error)),
            ok => Ok(ok),
        }
    }
}

impl Recommender for IpcClient {
    fn recommend(&self, items: &[ItemId], k: usize) -> Result<Vec<Scored>, ModelError> {
        let request = IpcRequest::Recommend {
            items: items.to_vec(),
            k,
        };
        match self.request(&request)? {
            IpcResponse::TopK { top_k } => {
                if top_k.len() > k {
                    return Err(ModelError::Protocol(format!("asked for {k} items, got {}", top_k.len())));
                }
                if let Some(s) = top_k.iter().find(|s| items.contains(&s.item)) {
                    return Err(ModelError::Protocol(format!("recommended session item {}", s.item)));
                }
                Ok(top_k)
            }
            other => Err(ModelError::Protocol(format!("expected top_k, got {other:?}"))),
        }
    }

    fn attention(&self, tokens: &[ItemId]) -> Result<AttentionMatrix, ModelError> {
        let request = IpcRequest::Attention {
            items: tokens.to_vec(),
        };
        match self.request(&request)? {
            IpcResponse::Attention { attention, synthetic } => {
                let rows: Vec<Vec<f64>> = attention
                    .iter()
                    .map(|r| r.iter().map(|v| v.0).collect())
                    .collect();
                if rows.len() != tokens.len() {
                    return Err(ModelError::Protocol(format!(
                        "attention over {} tokens has {} rows",
                        tokens.len(),
                        rows.len()
                    )));
                }
                let m = matrix_from_rows(&rows)?;
                Ok(if synthetic {
                    AttentionMatrix::synthetic_factor(m)?
                } else {
                    AttentionMatrix::new(m)?
                })
            }
            other => Err(ModelError::Protocol(format!("expected attention, got {other:?}"))),
        }
    }
}
