//! In-process network simulator.
//!
//! Each node is an actor holding its own scores, multiplier and the edge
//! blocks it is responsible for. Actors talk only through messages, and a
//! message to a non-neighbor is refused. Every phase runs the same update
//! functions as the monolithic solvers on the same inputs, so the final
//! multipliers agree bit for bit.
//!
//! Edge (i, i') with i < i' is owned by i. Per iteration:
//!
//! PCM
//!   1. non-owner sends `λ + v/ρ` to the owner
//!   2. owner computes both copies, returns the non-owner's copy
//!   3. every node solves its local problem
//!   4. non-owner sends `λ⁺` to the owner
//!   5. owner updates both duals, returns the non-owner's dual
//!
//! MAOM
//!   1. every node sends `λ` to every neighbor
//!   2. owner computes `z`, sends `(z, t)` to the non-owner
//!   3. every node solves its local problem
//!   4. non-owner sends `λ⁺` to the owner
//!   5. owner updates `t`
//!
//! That is 4M block messages per PCM iteration and 2M + Σ|N_i| per MAOM
//! iteration. Residuals and the stopping rule are evaluated by an observer
//! that sees all state; the nodes never use them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::admm::{observe, Algorithm, Problem, RunReport, SolverConfig};
use crate::el::Scores;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::maom::{maom_dual_update, maom_node_update, maom_residuals, maom_z_update, MaomNeighbor, MaomState};
use crate::pcm::{
    edge_copies, pcm_dual_update, pcm_node_update, pcm_residuals, shifted_copy, EdgePair, PcmState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MessageKind {
    LambdaShare,
    EdgeVarShare,
    DualShare,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub sender: usize,
    pub receiver: usize,
    pub round: usize,
    pub kind: MessageKind,
    pub payload: Vec<DVector<f64>>,
}

/// Phases of one iteration, each followed by a delivery barrier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    ShareShifted,
    EdgeUpdate,
    BroadcastLambda,
    NodeSolve,
    ReturnLambda,
    DualUpdate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundSchedule {
    pub algorithm: Algorithm,
    pub phases: Vec<Phase>,
}

impl RoundSchedule {
    pub fn for_algorithm(algorithm: Algorithm) -> Self {
        use Phase::*;
        let phases = match algorithm {
            Algorithm::Pcm => vec![ShareShifted, EdgeUpdate, NodeSolve, ReturnLambda, DualUpdate],
            Algorithm::Maom => vec![BroadcastLambda, EdgeUpdate, NodeSolve, ReturnLambda, DualUpdate],
        };
        Self { algorithm, phases }
    }

    /// Block messages sent per iteration on `graph`.
    pub fn messages_per_iteration(&self, graph: &Graph) -> usize {
        let m = graph.edge_count();
        match self.algorithm {
            Algorithm::Pcm => 4 * m,
            Algorithm::Maom => 2 * m + graph.degrees().iter().sum::<usize>(),
        }
    }
}

/// Owner of every edge: its lower-index endpoint.
pub fn edge_ownership(graph: &Graph) -> Vec<usize> {
    graph.edges().iter().map(|&(i, _)| i).collect()
}

/// An incident edge as held by one node.
#[derive(Debug, Clone)]
struct LocalEdge {
    edge: usize,
    other: usize,
    owner: bool,
    // PCM: this side's copy and dual; the owner also keeps the other side's
    c_own: DVector<f64>,
    v_own: DVector<f64>,
    c_other: DVector<f64>,
    v_other: DVector<f64>,
    // received neighbor blocks
    nbr_block: DVector<f64>,
    // MAOM: difference variable and dual (canonical at the owner)
    z: DVector<f64>,
    t: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct NodeActor {
    pub id: usize,
    scores: Scores,
    pub lambda: DVector<f64>,
    edges: Vec<LocalEdge>,
    inbox: Vec<Message>,
}

impl NodeActor {
    fn new(graph: &Graph, id: usize, scores: Scores) -> Self {
        let r = scores.dim();
        let zero = DVector::zeros(r);
        let edges = graph
            .incident(id)
            .iter()
            .map(|inc| LocalEdge {
                edge: inc.edge,
                other: inc.other,
                owner: inc.lower,
                c_own: zero.clone(),
                v_own: zero.clone(),
                c_other: zero.clone(),
                v_other: zero.clone(),
                nbr_block: zero.clone(),
                z: zero.clone(),
                t: zero.clone(),
            })
            .collect();
        Self { id, scores, lambda: zero, edges, inbox: Vec::new() }
    }

    fn msg(&self, receiver: usize, round: usize, kind: MessageKind, payload: Vec<DVector<f64>>) -> Message {
        Message { sender: self.id, receiver, round, kind, payload }
    }

    fn slot(&mut self, sender: usize) -> Result<&mut LocalEdge> {
        let id = self.id;
        self.edges
            .iter_mut()
            .find(|e| e.other == sender)
            .ok_or(Error::LocalityViolation { sender, receiver: id })
    }

    /// Moves the inbox into the edge slots.
    fn absorb(&mut self, r: usize) -> Result<()> {
        for msg in std::mem::take(&mut self.inbox) {
            if msg.payload.iter().any(|b| b.len() != r) {
                return Err(Error::DimensionMismatch { expected: r, got: msg.payload[0].len() });
            }
            let slot = self.slot(msg.sender)?;
            let mut blocks = msg.payload.into_iter();
            match msg.kind {
                MessageKind::LambdaShare => slot.nbr_block = blocks.next().unwrap(),
                MessageKind::EdgeVarShare => {
                    let first = blocks.next().unwrap();
                    match blocks.next() {
                        // MAOM (z, t)
                        Some(t) => {
                            slot.z = first;
                            slot.t = t;
                        }
                        None => slot.c_own = first,
                    }
                }
                MessageKind::DualShare => slot.v_own = blocks.next().unwrap(),
            }
        }
        Ok(())
    }
}

/// One line of the traffic tally.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrafficRow {
    pub node: usize,
    pub round: usize,
    pub msgs_sent: usize,
    pub blocks_sent: usize,
}

/// Attempted sends across a non-edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub sender: usize,
    pub receiver: usize,
    pub round: usize,
}

/// Per node and iteration message counts, plus any locality violations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LocalityCertificate {
    pub traffic: Vec<TrafficRow>,
    pub violations: Vec<Violation>,
    /// Messages delivered and checked against the edge set.
    pub checked: usize,
}

impl LocalityCertificate {
    pub const CSV_HEADER: &'static str = "node,round,msgs_sent,blocks_sent";

    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn total_messages(&self) -> usize {
        self.traffic.iter().map(|t| t.msgs_sent).sum()
    }

    pub fn messages_in_round(&self, round: usize) -> usize {
        self.traffic.iter().filter(|t| t.round == round).map(|t| t.msgs_sent).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for t in &self.traffic {
            let _ = writeln!(s, "{},{},{},{}", t.node, t.round, t.msgs_sent, t.blocks_sent);
        }
        s
    }
}

/// Virtual network: validates, tallies and delivers messages at barriers.
#[derive(Debug)]
pub struct Network {
    graph: Graph,
    pending: Vec<Message>,
    tally: BTreeMap<(usize, usize), (usize, usize)>,
    violations: Vec<Violation>,
    checked: usize,
}

impl Network {
    pub fn new(graph: Graph) -> Self {
        Self { graph, pending: Vec::new(), tally: BTreeMap::new(), violations: Vec::new(), checked: 0 }
    }

    /// Queues `msg`, refusing it unless sender and receiver are adjacent.
    pub fn send(&mut self, msg: Message) -> Result<()> {
        if !self.graph.has_edge(msg.sender, msg.receiver) {
            self.violations.push(Violation { sender: msg.sender, receiver: msg.receiver, round: msg.round });
            return Err(Error::LocalityViolation { sender: msg.sender, receiver: msg.receiver });
        }
        let entry = self.tally.entry((msg.sender, msg.round)).or_default();
        entry.0 += 1;
        entry.1 += msg.payload.len();
        self.pending.push(msg);
        Ok(())
    }

    fn deliver(&mut self, actors: &mut [NodeActor]) {
        for msg in self.pending.drain(..) {
            self.checked += 1;
            actors[msg.receiver].inbox.push(msg);
        }
    }

    pub fn certificate(&self) -> LocalityCertificate {
        LocalityCertificate {
            traffic: self
                .tally
                .iter()
                .map(|(&(node, round), &(msgs_sent, blocks_sent))| TrafficRow { node, round, msgs_sent, blocks_sent })
                .collect(),
            violations: self.violations.clone(),
            checked: self.checked,
        }
    }
}

/// Final state of a simulated run, assembled by the observer.
#[derive(Debug, Clone, PartialEq)]
pub enum DecentralizedState {
    Pcm(PcmState),
    Maom(MaomState),
}

impl DecentralizedState {
    pub fn lambdas(&self) -> &[DVector<f64>] {
        match self {
            Self::Pcm(s) => &s.lambdas,
            Self::Maom(s) => &s.lambdas,
        }
    }
}

fn post_all(net: &mut Network, outgoing: Vec<Vec<Message>>) -> Result<()> {
    outgoing.into_iter().flatten().try_for_each(|m| net.send(m))
}

fn pcm_observe(graph: &Graph, actors: &[NodeActor], r: usize) -> (Vec<DVector<f64>>, Vec<EdgePair>, Vec<EdgePair>) {
    let m = graph.edge_count();
    let mut copies = vec![EdgePair::zeros(r); m];
    let mut duals = vec![EdgePair::zeros(r); m];
    for a in actors {
        for e in a.edges.iter().filter(|e| e.owner) {
            copies[e.edge] = EdgePair { lower: e.c_own.clone(), upper: e.c_other.clone() };
            duals[e.edge] = EdgePair { lower: e.v_own.clone(), upper: e.v_other.clone() };
        }
    }
    (actors.iter().map(|a| a.lambda.clone()).collect(), copies, duals)
}

fn maom_observe(graph: &Graph, actors: &[NodeActor], r: usize) -> (Vec<DVector<f64>>, Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let m = graph.edge_count();
    let mut z = vec![DVector::zeros(r); m];
    let mut t = vec![DVector::zeros(r); m];
    for a in actors {
        for e in a.edges.iter().filter(|e| e.owner) {
            z[e.edge] = e.z.clone();
            t[e.edge] = e.t.clone();
        }
    }
    (actors.iter().map(|a| a.lambda.clone()).collect(), z, t)
}

/// Runs `algorithm` as message-passing node actors. The final multipliers
/// equal those of `run_pcm` / `run_maom` exactly.
pub fn run_decentralized(
    algorithm: Algorithm,
    problem: &Problem,
    config: &SolverConfig,
) -> Result<(DecentralizedState, RunReport, LocalityCertificate)> {
    config.validate()?;
    let graph = &problem.graph;
    let r = problem.dim();
    let mut actors: Vec<NodeActor> =
        (0..graph.node_count()).map(|i| NodeActor::new(graph, i, problem.scores[i].clone())).collect();
    let mut net = Network::new(graph.clone());
    let mut report = RunReport { algorithm: Some(algorithm), ..Default::default() };
    let wall = Instant::now();
    let (rho, eta) = (config.rho, config.eta);
    let mut prev = match algorithm {
        Algorithm::Pcm => {
            let (_, c, v) = pcm_observe(graph, &actors, r);
            (c, v, Vec::new(), Vec::new())
        }
        Algorithm::Maom => {
            let (_, z, t) = maom_observe(graph, &actors, r);
            (Vec::new(), Vec::new(), z, t)
        }
    };

    for it in 1..=config.max_iter {
        let start = Instant::now();
        match algorithm {
            Algorithm::Pcm => pcm_round(&mut actors, &mut net, problem, config, it, rho, eta, r)?,
            Algorithm::Maom => maom_round(&mut actors, &mut net, problem, config, it, rho, eta, r)?,
        }
        let elapsed = start.elapsed();

        let (lambdas, record) = match algorithm {
            Algorithm::Pcm => {
                let (lambdas, copies, duals) = pcm_observe(graph, &actors, r);
                let res = pcm_residuals(graph, config, &lambdas, &copies, &duals, &prev.0, &prev.1);
                prev.0 = copies;
                prev.1 = duals;
                let rec = observe(it, res.parts(), problem, config, &lambdas, elapsed);
                (lambdas, rec)
            }
            Algorithm::Maom => {
                let (lambdas, z, t) = maom_observe(graph, &actors, r);
                let res = maom_residuals(graph, config, &lambdas, &z, &t, &prev.2, &prev.3);
                prev.2 = z;
                prev.3 = t;
                let rec = observe(it, res.parts(), problem, config, &lambdas, elapsed);
                (lambdas, rec)
            }
        };
        let done = record.converged();
        report.records.push(record);
        if config.record_lambdas {
            report.lambda_trajectory.push(lambdas);
        }
        if done {
            report.converged = true;
            break;
        }
    }
    report.wall_time = wall.elapsed();

    let iteration = report.iterations();
    let last = report.final_record().cloned();
    let (p, d) = last.map_or((f64::INFINITY, f64::INFINITY), |l| (l.primal, l.dual));
    let state = match algorithm {
        Algorithm::Pcm => {
            let (lambdas, copies, duals) = pcm_observe(graph, &actors, r);
            DecentralizedState::Pcm(PcmState { lambdas, copies, duals, iteration, r1_norm: p, s1_norm: d })
        }
        Algorithm::Maom => {
            let (lambdas, z, t) = maom_observe(graph, &actors, r);
            DecentralizedState::Maom(MaomState { lambdas, z, t, iteration, r2_norm: p, s2_norm: d })
        }
    };
    Ok((state, report, net.certificate()))
}

#[allow(clippy::too_many_arguments)]
fn pcm_round(
    actors: &mut [NodeActor],
    net: &mut Network,
    problem: &Problem,
    config: &SolverConfig,
    round: usize,
    rho: f64,
    eta: f64,
    r: usize,
) -> Result<()> {
    // 1. shifted blocks towards the owners
    let out = actors
        .iter()
        .map(|a| {
            a.edges
                .iter()
                .filter(|e| !e.owner)
                .map(|e| a.msg(e.other, round, MessageKind::LambdaShare, vec![shifted_copy(&a.lambda, &e.v_own, rho)]))
                .collect()
        })
        .collect();
    post_all(net, out)?;
    net.deliver(actors);

    // 2. owners compute both copies
    let out = actors
        .par_iter_mut()
        .map(|a| {
            a.absorb(r)?;
            let mut msgs = Vec::new();
            for idx in 0..a.edges.len() {
                let e = &a.edges[idx];
                if !e.owner {
                    continue;
                }
                let own = shifted_copy(&a.lambda, &e.v_own, rho);
                let (lower, upper) = edge_copies(&own, &e.nbr_block, rho, eta);
                msgs.push(a.msg(e.other, round, MessageKind::EdgeVarShare, vec![upper.clone()]));
                let e = &mut a.edges[idx];
                e.c_own = lower;
                e.c_other = upper;
            }
            Ok(msgs)
        })
        .collect::<Result<Vec<_>>>()?;
    post_all(net, out)?;
    net.deliver(actors);

    // 3. local solves, then λ⁺ back to the owners
    let out = actors
        .par_iter_mut()
        .map(|a| {
            a.absorb(r)?;
            let incident: Vec<(&DVector<f64>, &DVector<f64>)> = a.edges.iter().map(|e| (&e.v_own, &e.c_own)).collect();
            let next = pcm_node_update(
                &a.scores,
                problem.eps,
                &a.lambda,
                &incident,
                rho,
                config.inner_tol,
                config.inner_max_iter,
            )?;
            a.lambda = next;
            Ok(a.edges
                .iter()
                .filter(|e| !e.owner)
                .map(|e| a.msg(e.other, round, MessageKind::LambdaShare, vec![a.lambda.clone()]))
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    post_all(net, out)?;
    net.deliver(actors);

    // 4. owners update both duals and return the non-owner's
    let out = actors
        .par_iter_mut()
        .map(|a| {
            a.absorb(r)?;
            let mut msgs = Vec::new();
            for idx in 0..a.edges.len() {
                if !a.edges[idx].owner {
                    continue;
                }
                let e = &a.edges[idx];
                let v_lower = pcm_dual_update(&e.v_own, &a.lambda, &e.c_own, rho);
                let v_upper = pcm_dual_update(&e.v_other, &e.nbr_block, &e.c_other, rho);
                msgs.push(a.msg(e.other, round, MessageKind::DualShare, vec![v_upper.clone()]));
                let e = &mut a.edges[idx];
                e.v_own = v_lower;
                e.v_other = v_upper;
            }
            Ok(msgs)
        })
        .collect::<Result<Vec<_>>>()?;
    post_all(net, out)?;
    net.deliver(actors);
    actors.par_iter_mut().try_for_each(|a| a.absorb(r))
}

#[allow(clippy::too_many_arguments)]
fn maom_round(
    actors: &mut [NodeActor],
    net: &mut Network,
    problem: &Problem,
    _config: &SolverConfig,
    round: usize,
    rho: f64,
    eta: f64,
    r: usize,
) -> Result<()> {
    // 1. broadcast λ
    let out = actors
        .iter()
        .map(|a| {
            a.edges
                .iter()
                .map(|e| a.msg(e.other, round, MessageKind::LambdaShare, vec![a.lambda.clone()]))
                .collect()
        })
        .collect();
    post_all(net, out)?;
    net.deliver(actors);

    // 2. owners compute z and share (z, t)
    let out = actors
        .par_iter_mut()
        .map(|a| {
            a.absorb(r)?;
            let mut msgs = Vec::new();
            for idx in 0..a.edges.len() {
                if !a.edges[idx].owner {
                    continue;
                }
                let e = &a.edges[idx];
                let z = maom_z_update(&a.lambda, &e.nbr_block, &e.t, rho, eta);
                msgs.push(a.msg(e.other, round, MessageKind::EdgeVarShare, vec![z.clone(), e.t.clone()]));
                a.edges[idx].z = z;
            }
            Ok(msgs)
        })
        .collect::<Result<Vec<_>>>()?;
    post_all(net, out)?;
    net.deliver(actors);

    // 3. local closed-form step, then λ⁺ back to the owners
    let out = actors
        .par_iter_mut()
        .map(|a| {
            a.absorb(r)?;
            let nbrs: Vec<MaomNeighbor<'_>> = a
                .edges
                .iter()
                .map(|e| MaomNeighbor { lambda: &e.nbr_block, z: &e.z, t: &e.t, lower: e.owner })
                .collect();
            let next = maom_node_update(&a.scores, problem.eps, &a.lambda, &nbrs, rho)?;
            a.lambda = next;
            Ok(a.edges
                .iter()
                .filter(|e| !e.owner)
                .map(|e| a.msg(e.other, round, MessageKind::LambdaShare, vec![a.lambda.clone()]))
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    post_all(net, out)?;
    net.deliver(actors);

    // 4. owners update t
    actors.par_iter_mut().try_for_each(|a| {
        a.absorb(r)?;
        for idx in 0..a.edges.len() {
            if !a.edges[idx].owner {
                continue;
            }
            let e = &a.edges[idx];
            let t = maom_dual_update(&e.t, &a.lambda, &e.nbr_block, &e.z, rho);
            a.edges[idx].t = t;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_data, substream};
    use crate::estfun::EstimatingFunction;
    use crate::maom::run_maom;
    use crate::pcm::run_pcm;

    fn fixture(graph: Graph) -> Problem {
        let ef = EstimatingFunction::mean(2).unwrap();
        let data = generate_data(&ef, graph.node_count(), 60, &mut substream(3, 0)).unwrap();
        Problem::new(graph, &data, &ef, &[1.1, 0.9], None).unwrap()
    }

    #[test]
    fn ownership_is_lower_endpoint() {
        let g = Graph::from_one_based(7, &[(2, 7), (1, 2), (3, 4), (4, 5), (5, 6), (6, 7)]).unwrap();
        let own = edge_ownership(&g);
        assert_eq!(own[0], 1);
        assert_eq!(own.len(), g.edge_count());
    }

    #[test]
    fn send_to_non_neighbor_is_refused() {
        let mut net = Network::new(Graph::star(3).unwrap());
        let leaf_to_leaf =
            Message { sender: 1, receiver: 2, round: 1, kind: MessageKind::LambdaShare, payload: vec![DVector::zeros(1)] };
        assert!(matches!(net.send(leaf_to_leaf), Err(Error::LocalityViolation { sender: 1, receiver: 2 })));
        assert!(!net.certificate().is_clean());
    }

    #[test]
    fn matches_monolithic_runs() {
        let p = fixture(Graph::from_one_based(5, &[(1, 2), (1, 3), (2, 3), (3, 4), (4, 5), (2, 5)]).unwrap());
        let mut cfg = SolverConfig::for_problem(&p);
        cfg.max_iter = 40;
        let (mono, _) = run_pcm(&p, &cfg).unwrap();
        let (state, rep, cert) = run_decentralized(Algorithm::Pcm, &p, &cfg).unwrap();
        assert_eq!(state, DecentralizedState::Pcm(mono.clone()));
        assert!(cert.is_clean());
        assert_eq!(cert.messages_in_round(1), 4 * 6);
        assert_eq!(rep.iterations(), mono.iteration);

        let (mono, _) = run_maom(&p, &cfg, false).unwrap();
        let (state, _, cert) = run_decentralized(Algorithm::Maom, &p, &cfg).unwrap();
        assert_eq!(state.lambdas(), &mono.lambdas[..]);
        assert_eq!(cert.messages_in_round(1), 2 * 6 + 12);
    }

    #[test]
    fn star_leaves_never_talk() {
        let p = fixture(Graph::star(3).unwrap());
        let mut cfg = SolverConfig::for_problem(&p);
        cfg.max_iter = 5;
        let (_, _, cert) = run_decentralized(Algorithm::Maom, &p, &cfg).unwrap();
        assert!(cert.is_clean());
        // the hub sends 2 broadcasts + 2 (z, t) shares, each leaf 1 + 1
        let hub: usize = cert.traffic.iter().filter(|t| t.node == 0 && t.round == 1).map(|t| t.msgs_sent).sum();
        assert_eq!(hub, 4);
    }
}
