//! Flattens a [`Netlist`] into pneumatic nets.
//!
//! A net is a maximal set of module sockets connected by tubes (plus the
//! in-module channel pairs `SP_IN`/`SP_THRU` and `OUT`/`OUT_NEXT`). The
//! logic and pressure engines both operate on nets, not sockets.

use std::collections::BTreeMap;

use crate::circuit::{Endpoint, Netlist, Socket};

/// Canonical per-module sockets that carry one pneumatic node each.
const NODE_SOCKETS: [Socket; 5] = [Socket::SpIn, Socket::T, Socket::Out, Socket::C1, Socket::C2];

/// One pneumatic net.
#[derive(Debug, Clone)]
pub struct Net {
    /// Stable display name: the first driving output if any, else the
    /// first supplied socket, else the first member socket.
    pub name: String,
    /// Member nodes as (module index, canonical socket).
    pub members: Vec<(usize, Socket)>,
    /// Indices into `netlist.supplies` attached to this net.
    pub supplies: Vec<usize>,
    /// Module indices whose `OUT` socket lies on this net.
    pub drivers: Vec<usize>,
}

/// Net decomposition of a netlist.
#[derive(Debug, Clone)]
pub struct NetMap {
    nets: Vec<Net>,
    /// (module index, canonical socket) -> net index.
    lookup: BTreeMap<(usize, Socket), usize>,
    module_index: BTreeMap<String, usize>,
}

impl NetMap {
    pub fn build(netlist: &Netlist) -> NetMap {
        let module_index: BTreeMap<String, usize> = netlist
            .modules
            .iter()
            .enumerate()
            .map(|(i, m)| (m.id.as_str().to_string(), i))
            .collect();

        let n_modules = netlist.modules.len();
        let node_id = |module: usize, socket: Socket| -> usize {
            let canon = socket.canonical();
            let slot = NODE_SOCKETS
                .iter()
                .position(|s| *s == canon)
                .expect("exhaust is not a net node");
            module * NODE_SOCKETS.len() + slot
        };

        let mut parent: Vec<usize> = (0..n_modules * NODE_SOCKETS.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let union = |parent: &mut [usize], a: usize, b: usize| {
            let ra = find(parent, a);
            let rb = find(parent, b);
            if ra != rb {
                let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
                parent[hi] = lo;
            }
        };

        for tube in &netlist.tubes {
            let from = resolve(&module_index, &tube.from);
            let to = resolve(&module_index, &tube.to);
            if let (Some(a), Some(b)) = (from, to) {
                union(&mut parent, node_id(a.0, a.1), node_id(b.0, b.1));
            }
        }

        // Group nodes by root, in node-id order so net contents and
        // numbering are deterministic.
        let mut by_root: BTreeMap<usize, Vec<(usize, Socket)>> = BTreeMap::new();
        for module in 0..n_modules {
            for socket in NODE_SOCKETS {
                let id = node_id(module, socket);
                let root = find(&mut parent, id);
                by_root.entry(root).or_default().push((module, socket));
            }
        }

        let mut nets = Vec::new();
        let mut lookup = BTreeMap::new();
        for (_, members) in by_root {
            let idx = nets.len();
            for member in &members {
                lookup.insert(*member, idx);
            }
            let supplies: Vec<usize> = netlist
                .supplies
                .iter()
                .enumerate()
                .filter_map(|(i, s)| {
                    let m = *module_index.get(s.module.as_str())?;
                    members.contains(&(m, Socket::SpIn)).then_some(i)
                })
                .collect();
            let drivers: Vec<usize> = members
                .iter()
                .filter(|(_, s)| *s == Socket::Out)
                .map(|(m, _)| *m)
                .collect();
            let name = if let Some(driver) = drivers.first() {
                format!("{}.OUT", netlist.modules[*driver].id)
            } else {
                let (m, s) = members
                    .iter()
                    .find(|(_, s)| !supplies.is_empty() && *s == Socket::SpIn)
                    .copied()
                    .unwrap_or(members[0]);
                format!("{}.{}", netlist.modules[m].id, s)
            };
            nets.push(Net {
                name,
                members,
                supplies,
                drivers,
            });
        }

        NetMap {
            nets,
            lookup,
            module_index,
        }
    }

    pub fn nets(&self) -> &[Net] {
        &self.nets
    }

    /// Net index of a module socket.
    pub fn net_of(&self, module: usize, socket: Socket) -> usize {
        self.lookup[&(module, socket.canonical())]
    }

    pub fn module_index(&self, id: &str) -> Option<usize> {
        self.module_index.get(id).copied()
    }

    /// Resolves an endpoint to (module index, canonical socket).
    pub fn resolve(&self, ep: &Endpoint) -> Option<(usize, Socket)> {
        resolve(&self.module_index, ep)
    }
}

fn resolve(index: &BTreeMap<String, usize>, ep: &Endpoint) -> Option<(usize, Socket)> {
    let module = *index.get(ep.module.as_str())?;
    if ep.socket == Socket::Exhaust {
        return None;
    }
    Some((module, ep.socket.canonical()))
}
