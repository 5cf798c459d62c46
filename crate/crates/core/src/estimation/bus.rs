//! Synchronous message passing over the current communication graph.
//!
//! Every round each agent broadcasts one fixed-width payload to all of its
//! neighbors; the payloads are readable from the receivers' inboxes until the
//! next round. Nothing travels between non-adjacent agents.
//!
//! When a trace sink is attached, one CSV record is written per delivered
//! message:
//!
//! ```text
//! round,phase,k,p,sender,receiver,payload
//! 17,solve,0,3,1,2,0.25;-1.5e-7
//! ```
//!
//! `k` and `p` are the outer and inner iteration counters, senders and
//! receivers are 1-based, and payload values are `;`-separated in full
//! precision.

use std::io::Write;

use crate::error::Result;
use crate::graph::Graph;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Centroid and spread of the positions.
    Frame,
    /// Neighbor exchange of solver iterates.
    Solve,
    /// Averages feeding the deflation product.
    Deflation,
    /// Norm and overlap averages for normalization.
    Normalize,
    /// Neighbor exchange and averages for the eigenvalue readout.
    Rayleigh,
    /// Sign alignment average.
    Align,
    /// Neighbor exchange for a deflated matrix-vector product.
    Power,
    /// Free-standing consensus use.
    Average,
}

impl Phase {
    pub fn tag(self) -> &'static str {
        match self {
            Phase::Frame => "frame",
            Phase::Solve => "solve",
            Phase::Deflation => "deflation",
            Phase::Normalize => "normalize",
            Phase::Rayleigh => "rayleigh",
            Phase::Align => "align",
            Phase::Power => "power",
            Phase::Average => "average",
        }
    }
}

/// Phase tag and iteration counters carried with every message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub phase: Phase,
    pub k: usize,
    pub p: usize,
}

impl Header {
    pub fn new(phase: Phase) -> Self {
        Header { phase, k: 0, p: 0 }
    }

    pub fn at(phase: Phase, k: usize, p: usize) -> Self {
        Header { phase, k, p }
    }
}

pub struct NetBus {
    adjacency: Vec<Vec<usize>>,
    width: usize,
    outbox: Vec<f64>,
    round: u64,
    delivered: u64,
    trace: Option<Box<dyn Write + Send>>,
}

impl std::fmt::Debug for NetBus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NetBus")
            .field("n", &self.adjacency.len())
            .field("round", &self.round)
            .field("delivered", &self.delivered)
            .field("tracing", &self.trace.is_some())
            .finish()
    }
}

impl NetBus {
    pub fn new(adjacency: Vec<Vec<usize>>) -> Self {
        NetBus {
            adjacency,
            width: 0,
            outbox: Vec::new(),
            round: 0,
            delivered: 0,
            trace: None,
        }
    }

    pub fn from_graph(g: &Graph) -> Self {
        Self::new((0..g.n()).map(|i| g.neighbors(i).to_vec()).collect())
    }

    /// Attach a trace sink and write the CSV header.
    pub fn with_trace(mut self, mut sink: Box<dyn Write + Send>) -> Result<Self> {
        writeln!(sink, "round,phase,k,p,sender,receiver,payload")?;
        self.trace = Some(sink);
        Ok(self)
    }

    /// Replace the communication graph (keeps counters and the trace sink).
    pub fn set_topology(&mut self, g: &Graph) {
        self.adjacency = (0..g.n()).map(|i| g.neighbors(i).to_vec()).collect();
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn rounds(&self) -> u64 {
        self.round
    }

    pub fn messages_delivered(&self) -> u64 {
        self.delivered
    }

    /// One synchronous round. `fill(i, buf)` writes agent `i`'s payload.
    pub fn exchange(
        &mut self,
        header: Header,
        width: usize,
        mut fill: impl FnMut(usize, &mut [f64]),
    ) -> Result<()> {
        let n = self.n();
        self.width = width;
        self.outbox.clear();
        self.outbox.resize(n * width, 0.0);
        for (i, chunk) in self.outbox.chunks_mut(width.max(1)).enumerate().take(n) {
            fill(i, &mut chunk[..width]);
        }
        self.round += 1;
        let sent: usize = self.adjacency.iter().map(Vec::len).sum();
        self.delivered += sent as u64;
        if self.trace.is_some() {
            self.write_trace(header)?;
        }
        Ok(())
    }

    /// Payloads received by agent `i` in the latest round.
    pub fn inbox(&self, i: usize) -> impl Iterator<Item = (usize, &[f64])> + '_ {
        let w = self.width;
        self.adjacency[i]
            .iter()
            .map(move |&j| (j, &self.outbox[j * w..(j + 1) * w]))
    }

    fn write_trace(&mut self, header: Header) -> Result<()> {
        let Some(sink) = self.trace.as_mut() else {
            return Ok(());
        };
        let w = self.width;
        for (receiver, list) in self.adjacency.iter().enumerate() {
            for &sender in list {
                let payload: Vec<String> = self.outbox[sender * w..(sender + 1) * w]
                    .iter()
                    .map(|x| format!("{x:?}"))
                    .collect();
                writeln!(
                    sink,
                    "{},{},{},{},{},{},{}",
                    self.round,
                    header.phase.tag(),
                    header.k,
                    header.p,
                    sender + 1,
                    receiver + 1,
                    payload.join(";")
                )?;
            }
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        if let Some(sink) = self.trace.as_mut() {
            sink.flush()?;
        }
        Ok(())
    }
}
