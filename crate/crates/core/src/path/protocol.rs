//! Newline-delimited JSON protocol for out-of-process sub-path solvers.
//!
//! Each request line is `{"id": u64, "coords": [[x, y], ...], "start": s, "end": e}`
//! and is answered by exactly one line, `{"id": u64, "order": [...]}` or
//! `{"id": u64|null, "error": "..."}`. Responses may arrive in any order and
//! unknown fields are ignored in both directions. A malformed line gets an
//! error response and the connection stays open.

use std::collections::HashMap;
use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{oriented, PathError, SubPathSolver};
use crate::geom::Point;
use crate::open_path::OpenPathProblem;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub coords: Vec<[f64; 2]>,
    #[serde(default)]
    pub start: Option<usize>,
    #[serde(default)]
    pub end: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid message: {0}")]
    Invalid(String),
}

impl Request {
    pub fn from_problem(id: u64, p: &OpenPathProblem) -> Self {
        Self {
            id,
            coords: p.coords.iter().map(|c| [c.x, c.y]).collect(),
            start: Some(p.start),
            end: Some(p.end),
        }
    }

    /// The open-path problem this request describes, with endpoints checked.
    pub fn to_problem(&self) -> Result<OpenPathProblem, ProtocolError> {
        let k = self.coords.len();
        if k == 0 {
            return Err(ProtocolError::Invalid("empty coords".into()));
        }
        if let Some(i) = self.coords.iter().position(|c| !c[0].is_finite() || !c[1].is_finite()) {
            return Err(ProtocolError::Invalid(format!("non-finite coordinate at {i}")));
        }
        let start = self.start.unwrap_or(0);
        let end = self.end.unwrap_or(k - 1);
        if start >= k || end >= k || (k > 1 && start == end) {
            return Err(ProtocolError::Invalid(format!("bad endpoints {start}, {end} for {k} nodes")));
        }
        Ok(OpenPathProblem {
            coords: self.coords.iter().map(|c| Point::new(c[0], c[1])).collect(),
            start,
            end,
        })
    }
}

pub fn parse_request(line: &str) -> Result<Request, ProtocolError> {
    Ok(serde_json::from_str(line)?)
}

/// Parses a response line; exactly one of `order` and `error` must be present.
pub fn parse_response(line: &str) -> Result<Response, ProtocolError> {
    let r: Response = serde_json::from_str(line)?;
    if r.order.is_some() == r.error.is_some() {
        return Err(ProtocolError::Invalid("need exactly one of order and error".into()));
    }
    Ok(r)
}

fn encode<T: Serialize>(msg: &T) -> String {
    let mut s = serde_json::to_string(msg).expect("protocol messages always serialize");
    s.push('\n');
    s
}

fn error_response(id: Option<u64>, msg: impl Into<String>) -> Response {
    Response {
        id,
        order: None,
        error: Some(msg.into()),
    }
}

/// Solves one request line with `solver`, which only sees problems whose
/// endpoints are first and last. Nodes are permuted in and out accordingly.
pub fn handle_line(solver: &dyn SubPathSolver, line: &str) -> Response {
    let req = match parse_request(line) {
        Ok(r) => r,
        Err(e) => {
            let id = serde_json::from_str::<serde_json::Value>(line)
                .ok()
                .and_then(|v| v.get("id").and_then(|i| i.as_u64()));
            return error_response(id, e.to_string());
        }
    };
    let p = match req.to_problem() {
        Ok(p) => p,
        Err(e) => return error_response(Some(req.id), e.to_string()),
    };
    let k = p.len();
    if k == 1 {
        return Response {
            id: Some(req.id),
            order: Some(vec![0]),
            error: None,
        };
    }
    let mut perm = vec![p.start];
    perm.extend((0..k).filter(|&i| i != p.start && i != p.end));
    perm.push(p.end);
    let local = OpenPathProblem::with_fixed_ends(perm.iter().map(|&i| p.coords[i]).collect());
    let result = match solver.solve_batch(std::slice::from_ref(&local)) {
        Ok(mut v) if v.len() == 1 => v.pop().unwrap(),
        Ok(v) => Err(format!("solver returned {} results", v.len())),
        Err(e) => Err(e.to_string()),
    };
    match result.and_then(|o| oriented(o, k)) {
        Ok(order) => Response {
            id: Some(req.id),
            order: Some(order.into_iter().map(|j| perm[j]).collect()),
            error: None,
        },
        Err(e) => error_response(Some(req.id), e),
    }
}

/// Answers requests line by line until `input` is exhausted.
pub fn serve<R: BufRead, W: Write>(solver: &dyn SubPathSolver, input: R, mut output: W) -> io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        output.write_all(encode(&handle_line(solver, &line)).as_bytes())?;
        output.flush()?;
    }
    Ok(())
}

/// Accepts connections and serves each on its own thread. Returns after
/// `max_connections` connections have closed, or never if `None`.
pub fn serve_tcp(solver: &dyn SubPathSolver, listener: TcpListener, max_connections: Option<usize>) -> io::Result<()> {
    std::thread::scope(|s| {
        for (i, stream) in listener.incoming().enumerate() {
            let stream = stream?;
            s.spawn(move || {
                let peer = stream.peer_addr().ok();
                let res = stream
                    .try_clone()
                    .and_then(|w| serve(solver, BufReader::new(stream), w));
                if let Err(e) = res {
                    log::warn!("connection {peer:?}: {e}");
                }
            });
            if max_connections.is_some_and(|m| i + 1 >= m) {
                break;
            }
        }
        Ok(())
    })
}

/// Sends one request per problem and collects the matching responses.
/// Writing happens on a separate thread so a peer that answers before reading
/// everything cannot deadlock on full pipes.
fn exchange<W: Write + Send, R: BufRead>(
    writer: &mut W,
    reader: &mut R,
    problems: &[OpenPathProblem],
    ids: &AtomicU64,
) -> Result<Vec<Result<Vec<usize>, String>>, PathError> {
    let base = ids.fetch_add(problems.len() as u64, Ordering::Relaxed);
    let index: HashMap<u64, usize> = (0..problems.len()).map(|i| (base + i as u64, i)).collect();
    let mut out: Vec<Option<Result<Vec<usize>, String>>> = vec![None; problems.len()];
    let io_err = |e: io::Error| PathError::Solver(format!("transport: {e}"));
    std::thread::scope(|s| {
        let sender = s.spawn(move || -> io::Result<()> {
            for (i, p) in problems.iter().enumerate() {
                writer.write_all(encode(&Request::from_problem(base + i as u64, p)).as_bytes())?;
            }
            writer.flush()
        });
        let mut line = String::new();
        let mut pending = problems.len();
        while pending > 0 {
            line.clear();
            if reader.read_line(&mut line).map_err(io_err)? == 0 {
                return Err(PathError::Solver(format!("peer closed with {pending} responses outstanding")));
            }
            if line.trim().is_empty() {
                continue;
            }
            let resp = parse_response(&line).map_err(|e| PathError::Solver(e.to_string()))?;
            let slot = resp
                .id
                .and_then(|id| index.get(&id))
                .ok_or_else(|| PathError::Solver(format!("response for unknown id {:?}: {:?}", resp.id, resp.error)))?;
            if out[*slot].is_some() {
                return Err(PathError::Solver(format!("duplicate response for id {base}+{slot}")));
            }
            out[*slot] = Some(match (resp.order, resp.error) {
                (Some(o), _) => Ok(o),
                (None, e) => Err(e.unwrap_or_default()),
            });
            pending -= 1;
        }
        sender
            .join()
            .map_err(|_| PathError::Solver("writer thread panicked".into()))?
            .map_err(io_err)
    })?;
    Ok(out.into_iter().map(|r| r.expect("all slots filled")).collect())
}

struct ChildIo {
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

/// Talks to a long-lived child process over its stdin and stdout.
pub struct ProcessSubPathSolver {
    io: Mutex<ChildIo>,
    ids: AtomicU64,
    label: String,
}

impl ProcessSubPathSolver {
    pub fn spawn(mut command: Command) -> io::Result<Self> {
        let label = format!("{:?}", command.get_program());
        let mut child = command.stdin(Stdio::piped()).stdout(Stdio::piped()).spawn()?;
        let stdin = child.stdin.take();
        let stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
        Ok(Self {
            io: Mutex::new(ChildIo { child, stdin, stdout }),
            ids: AtomicU64::new(0),
            label,
        })
    }
}

impl SubPathSolver for ProcessSubPathSolver {
    fn solve_batch(&self, problems: &[OpenPathProblem]) -> Result<Vec<Result<Vec<usize>, String>>, PathError> {
        if problems.is_empty() {
            return Ok(Vec::new());
        }
        let mut io = self.io.lock().map_err(|_| PathError::Solver("poisoned".into()))?;
        let ChildIo { stdin, stdout, .. } = &mut *io;
        let stdin = stdin
            .as_mut()
            .ok_or_else(|| PathError::Solver("child stdin closed".into()))?;
        exchange(stdin, stdout, problems, &self.ids)
    }

    fn name(&self) -> &str {
        &self.label
    }
}

impl Drop for ProcessSubPathSolver {
    fn drop(&mut self) {
        if let Ok(io) = self.io.get_mut() {
            io.stdin.take();
            let _ = io.child.wait();
        }
    }
}

/// Talks to a solver service over TCP.
pub struct TcpSubPathSolver {
    conn: Mutex<(TcpStream, BufReader<TcpStream>)>,
    ids: AtomicU64,
}

impl TcpSubPathSolver {
    pub fn connect(addr: impl ToSocketAddrs) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let reader = BufReader::new(stream.try_clone()?);
        Ok(Self {
            conn: Mutex::new((stream, reader)),
            ids: AtomicU64::new(0),
        })
    }
}

impl SubPathSolver for TcpSubPathSolver {
    fn solve_batch(&self, problems: &[OpenPathProblem]) -> Result<Vec<Result<Vec<usize>, String>>, PathError> {
        if problems.is_empty() {
            return Ok(Vec::new());
        }
        let mut conn = self.conn.lock().map_err(|_| PathError::Solver("poisoned".into()))?;
        let (w, r) = &mut *conn;
        exchange(w, r, problems, &self.ids)
    }

    fn name(&self) -> &str {
        "tcp"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::open_path::open_path_length;
    use crate::path::HeuristicSubPathSolver;

    fn run(lines: &str) -> Vec<Response> {
        let mut out = Vec::new();
        serve(&HeuristicSubPathSolver::default(), lines.as_bytes(), &mut out).unwrap();
        String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect()
    }

    #[test]
    fn serves_valid_and_malformed_lines() {
        let input = concat!(
            "{\"id\":7,\"coords\":[[0,0],[3,0],[1,0],[2,0]],\"start\":0,\"end\":1,\"extra\":true}\n",
            "not json\n",
            "\n",
            "{\"id\":8,\"coords\":[[0,0],[1,1]],\"start\":1,\"end\":1}\n",
            "{\"id\":9,\"coords\":[[0,0],[1,1],[2,2]]}\n",
        );
        let r = run(input);
        assert_eq!(r.len(), 4);
        assert_eq!((r[0].id, r[0].order.clone()), (Some(7), Some(vec![0, 2, 3, 1])));
        assert_eq!(r[1].id, None);
        assert!(r[1].error.is_some());
        assert_eq!(r[2].id, Some(8));
        assert!(r[2].error.as_deref().unwrap().contains("endpoints"));
        assert_eq!(r[3].order, Some(vec![0, 1, 2]));
    }

    #[test]
    fn malformed_request_with_id_echoes_it() {
        let r = run("{\"id\":3,\"coords\":\"oops\"}\n");
        assert_eq!(r[0].id, Some(3));
        assert!(r[0].error.is_some());
    }

    #[test]
    fn response_parsing() {
        assert!(parse_response("{\"id\":1,\"order\":[0,1],\"x\":[]}").is_ok());
        assert!(parse_response("{\"id\":1,\"error\":\"e\"}").is_ok());
        assert!(parse_response("{\"id\":1}").is_err());
        assert!(parse_response("{\"id\":1,\"order\":[0],\"error\":\"e\"}").is_err());
        assert!(parse_response("{").is_err());
    }

    #[test]
    fn coordinates_round_trip_exactly() {
        let p = OpenPathProblem::with_fixed_ends(vec![
            Point::new(0.1 + 0.2, 1e-300),
            Point::new(std::f64::consts::PI, -0.0),
            Point::new(123456.789012345, 9.999999999999999e22),
        ]);
        let line = encode(&Request::from_problem(5, &p));
        let back = parse_request(line.trim()).unwrap().to_problem().unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn exchange_over_in_memory_pipes() {
        // Responses are produced out of order by a hand-written peer.
        let problems: Vec<OpenPathProblem> = (0..3)
            .map(|i| OpenPathProblem::with_fixed_ends(vec![Point::new(0.0, 0.0), Point::new(i as f64, 1.0), Point::new(2.0, 0.0)]))
            .collect();
        let replies = "{\"id\":2,\"order\":[2,1,0]}\n{\"id\":0,\"order\":[0,1,2]}\n{\"id\":1,\"error\":\"busy\"}\n";
        let mut sink = Vec::new();
        let mut src = replies.as_bytes();
        let out = exchange(&mut sink, &mut src, &problems, &AtomicU64::new(0)).unwrap();
        assert_eq!(out[0], Ok(vec![0, 1, 2]));
        assert_eq!(out[1], Err("busy".to_string()));
        assert_eq!(out[2], Ok(vec![2, 1, 0]));
        assert_eq!(String::from_utf8(sink).unwrap().lines().count(), 3);
        let mut short = "{\"id\":3,\"order\":[0,1,2]}\n".as_bytes();
        assert!(exchange(&mut Vec::new(), &mut short, &problems, &AtomicU64::new(3)).is_err());
        let mut wrong = "{\"id\":99,\"order\":[0,1,2]}\n".as_bytes();
        assert!(exchange(&mut Vec::new(), &mut wrong, &problems[..1], &AtomicU64::new(0)).is_err());
    }

    #[test]
    fn tcp_round_trip_matches_in_process() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let local = HeuristicSubPathSolver::default();
        std::thread::scope(|s| {
            s.spawn(|| serve_tcp(&local, listener, Some(1)).unwrap());
            let client = TcpSubPathSolver::connect(addr).unwrap();
            let inst = crate::instance::generate_random(30 * 12, 4).unwrap();
            let problems: Vec<OpenPathProblem> = inst
                .nodes()
                .chunks(30)
                .map(|c| OpenPathProblem::with_fixed_ends(c.to_vec()))
                .collect();
            let remote = client.solve_batch(&problems).unwrap();
            let direct = local.solve_batch(&problems).unwrap();
            for ((p, a), b) in problems.iter().zip(&remote).zip(&direct) {
                let (a, b) = (a.as_ref().unwrap(), b.as_ref().unwrap());
                assert_eq!(a, b);
                assert!(open_path_length(p, a) > 0.0);
            }
            drop(client);
        });
    }
}
