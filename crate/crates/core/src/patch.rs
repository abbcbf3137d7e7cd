//! The patch graph: block instances wired output-to-input.

use std::collections::HashMap;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use crate::block::{BlockKind, BlockParams};
use crate::diag::{Code, Diagnostic, Location};

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub id: String,
    pub params: BlockParams,
}

impl Block {
    pub fn kind(&self) -> BlockKind {
        self.params.kind()
    }
}

/// Connection from a block's single output to one input port of another.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Wire {
    pub from: String,
    pub to: String,
    pub port: usize,
}

/// An analogue program: blocks (including external inputs and probes), the
/// wires between them, and named parameters kept for documentation.
///
/// Probes and external inputs are blocks of kind `probe` and `input`; a probe
/// is driven by an ordinary wire into its single port.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Patch {
    pub name: String,
    pub params: Vec<(String, f64)>,
    pub blocks: Vec<Block>,
    pub wires: Vec<Wire>,
    /// Probes or output blocks routed to audio export, in channel order.
    pub outputs: Vec<String>,
}

impl Patch {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn add_block(&mut self, id: impl Into<String>, params: BlockParams) -> &mut Self {
        self.blocks.push(Block {
            id: id.into(),
            params,
        });
        self
    }

    pub fn add_input(&mut self, id: impl Into<String>) -> &mut Self {
        self.add_block(id, BlockParams::Input)
    }

    pub fn wire(&mut self, from: impl Into<String>, to: impl Into<String>, port: usize) -> &mut Self {
        self.wires.push(Wire {
            from: from.into(),
            to: to.into(),
            port,
        });
        self
    }

    /// Declares a probe block `name` fed from `source`.
    pub fn probe(&mut self, name: impl Into<String>, source: impl Into<String>) -> &mut Self {
        let name = name.into();
        self.add_block(name.clone(), BlockParams::Probe);
        self.wire(source, name, 0)
    }

    pub fn block(&self, id: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.id == id)
    }

    pub fn block_index(&self, id: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.id == id)
    }

    pub fn count(&self, kind: BlockKind) -> usize {
        self.blocks.iter().filter(|b| b.kind() == kind).count()
    }

    /// Names of probe blocks in declaration order.
    pub fn probe_names(&self) -> impl Iterator<Item = &str> {
        self.blocks
            .iter()
            .filter(|b| b.kind() == BlockKind::Probe)
            .map(|b| b.id.as_str())
    }

    /// The block driving input `port` of `block`, if any.
    pub fn driver(&self, block: &str, port: usize) -> Option<&str> {
        self.wires
            .iter()
            .find(|w| w.to == block && w.port == port)
            .map(|w| w.from.as_str())
    }

    /// Structural equality that ignores wire order.
    pub fn is_isomorphic(&self, other: &Patch) -> bool {
        let mut a = self.wires.clone();
        let mut b = other.wires.clone();
        a.sort();
        b.sort();
        self.name == other.name
            && self.params == other.params
            && self.blocks == other.blocks
            && self.outputs == other.outputs
            && a == b
    }
}

/// Returns every violation of the patch invariants. An empty list means the
/// patch can be compiled for simulation.
pub fn validate_patch(patch: &Patch) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();

    for (i, block) in patch.blocks.iter().enumerate() {
        if index.insert(block.id.as_str(), i).is_some() {
            diags.push(Diagnostic::error(
                Code::DuplicateId,
                Location::Block(i),
                format!("block `{}` is declared more than once", block.id),
            ));
        }
        if let Err(msg) = block.params.check() {
            diags.push(Diagnostic::error(
                Code::Param,
                Location::Block(i),
                format!("{} `{}`: {msg}", block.kind(), block.id),
            ));
        }
    }

    let mut driven: HashMap<(usize, usize), usize> = HashMap::new();
    let mut resolved = Vec::with_capacity(patch.wires.len());
    for (wi, wire) in patch.wires.iter().enumerate() {
        let src = index.get(wire.from.as_str()).copied();
        let dst = index.get(wire.to.as_str()).copied();
        match src {
            None => diags.push(Diagnostic::error(
                Code::UnknownId,
                Location::WireSource(wi),
                format!("wire source `{}` is not declared", wire.from),
            )),
            Some(s) if !patch.blocks[s].params.has_output() => diags.push(Diagnostic::error(
                Code::Port,
                Location::WireSource(wi),
                format!(
                    "`{}` is a {} and has no output port",
                    wire.from,
                    patch.blocks[s].kind()
                ),
            )),
            _ => {}
        }
        match dst {
            None => diags.push(Diagnostic::error(
                Code::UnknownId,
                Location::WireTarget(wi),
                format!("wire target `{}` is not declared", wire.to),
            )),
            Some(d) => {
                let arity = patch.blocks[d].params.input_arity();
                if wire.port >= arity {
                    diags.push(Diagnostic::error(
                        Code::Port,
                        Location::WireTarget(wi),
                        format!(
                            "`{}.in[{}]` does not exist: {} `{}` has {} input port(s)",
                            wire.to,
                            wire.port,
                            patch.blocks[d].kind(),
                            wire.to,
                            arity
                        ),
                    ));
                } else if let Some(first) = driven.insert((d, wire.port), wi) {
                    diags.push(Diagnostic::error(
                        Code::DuplicateDriver,
                        Location::WireTarget(wi),
                        format!(
                            "`{}.in[{}]` is already driven by `{}`",
                            wire.to, wire.port, patch.wires[first].from
                        ),
                    ));
                }
            }
        }
        if let (Some(s), Some(d)) = (src, dst) {
            resolved.push((wi, s, d));
        }
    }

    for (oi, name) in patch.outputs.iter().enumerate() {
        match index.get(name.as_str()) {
            Some(&b) if patch.blocks[b].kind().is_sink() => {}
            Some(_) => diags.push(Diagnostic::error(
                Code::Port,
                Location::Output(oi),
                format!("output `{name}` must name a probe or an output block"),
            )),
            None => diags.push(Diagnostic::error(
                Code::UnknownId,
                Location::Output(oi),
                format!("output `{name}` is not declared"),
            )),
        }
    }

    diags.extend(algebraic_loops(patch, &resolved));
    diags
}

/// Stateless cycles: strongly connected components of the instantaneous
/// dependency graph, where wires into integrators and bbds carry no edge.
fn algebraic_loops(patch: &Patch, wires: &[(usize, usize, usize)]) -> Vec<Diagnostic> {
    let mut graph = DiGraph::<usize, usize>::with_capacity(patch.blocks.len(), wires.len());
    let nodes: Vec<_> = (0..patch.blocks.len()).map(|i| graph.add_node(i)).collect();
    for &(wi, s, d) in wires {
        if !patch.blocks[d].kind().is_stateful() {
            graph.add_edge(nodes[s], nodes[d], wi);
        }
    }

    let mut out = Vec::new();
    let mut sccs = tarjan_scc(&graph);
    for scc in sccs.iter_mut() {
        scc.sort();
    }
    sccs.sort();
    for scc in sccs {
        let cyclic = scc.len() > 1 || graph.contains_edge(scc[0], scc[0]);
        if !cyclic {
            continue;
        }
        let members: Vec<usize> = scc.iter().map(|n| graph[*n]).collect();
        let first_wire = wires
            .iter()
            .filter(|(_, s, d)| members.contains(s) && members.contains(d))
            .filter(|(_, _, d)| !patch.blocks[*d].kind().is_stateful())
            .map(|(wi, _, _)| *wi)
            .min()
            .expect("cyclic component has an internal wire");
        let names: Vec<&str> = members.iter().map(|&b| patch.blocks[b].id.as_str()).collect();
        out.push(Diagnostic::error(
            Code::AlgebraicLoop,
            Location::WireTarget(first_wire),
            format!(
                "feedback loop through {} has no integrator or bbd",
                names.join(", ")
            ),
        ));
    }
    out
}
