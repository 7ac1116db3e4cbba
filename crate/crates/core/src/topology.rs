//! Host/link graph standing in for the emulated SDN.
//!
//! The canonical wiring used by [`build_default_topology`] is fixed:
//!
//! * hosts are numbered contiguously by subnet: subnet 1 = `0..6`,
//!   subnet 2 = `6..14`, subnet 3 = `14..23`, subnet 4 = `23..32`;
//! * the first host of every subnet is its gateway and every other host of
//!   the subnet hangs off it (links `0..28`);
//! * the four gateways form a ring `0-6-14-23-0` (links `28..32`);
//! * 16 cross-subnet redundancy links (links `32..48`): for `k in 0..16`
//!   with `a = k % 4`, `b = (a + 1) % 4`, `i = k / 4`, link `32 + k` joins
//!   non-gateway host `(2i + 1) mod |a|` of subnet `a` with non-gateway host
//!   `2i mod |b|` of subnet `b`.
//!
//! The attacker entry points are the second hosts of subnets 1-3
//! (`1`, `7`, `15`) and the critical server is the last host of subnet 4
//! (`31`).

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use crate::error::{Error, Result};

pub type HostId = usize;
pub type LinkId = usize;

pub const DEFAULT_HOSTS: usize = 32;
pub const DEFAULT_LINKS: usize = 48;
pub const DEFAULT_SUBNET_SIZES: [usize; 4] = [6, 8, 9, 9];

const REDUNDANCY_LINKS: usize = 16;
const ADJACENCY_MAGIC: &str = "# ctf-arena topology v1";

/// An undirected link with a single up/down flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Link {
    pub a: HostId,
    pub b: HostId,
    pub up: bool,
}

impl Link {
    pub fn touches(&self, h: HostId) -> bool {
        self.a == h || self.b == h
    }

    /// The endpoint opposite `h`. Only meaningful when `self.touches(h)`.
    pub fn other(&self, h: HostId) -> HostId {
        if self.a == h {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    num_hosts: usize,
    links: Vec<Link>,
    subnets: Vec<Vec<HostId>>,
    critical_server: HostId,
    entry_points: Vec<HostId>,
    incident: Vec<Vec<LinkId>>,
}

/// The fixed 32-host, 48-link, four-subnet star topology.
pub fn build_default_topology() -> Topology {
    Topology::canonical()
}

impl Topology {
    /// Builds and validates a topology with every link up.
    ///
    /// Subnets must partition `0..num_hosts`, the entry points must be
    /// distinct and must not include the critical server, and the graph must
    /// be connected.
    pub fn new(
        num_hosts: usize,
        edges: &[(HostId, HostId)],
        subnets: Vec<Vec<HostId>>,
        critical_server: HostId,
        entry_points: Vec<HostId>,
    ) -> Result<Self> {
        if num_hosts == 0 {
            return Err(Error::InvalidTopology("no hosts".into()));
        }
        let mut seen_edges = BTreeSet::new();
        let mut links = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= num_hosts {
                return Err(Error::UnknownHost(a));
            }
            if b >= num_hosts {
                return Err(Error::UnknownHost(b));
            }
            if a == b {
                return Err(Error::InvalidTopology(format!("self loop on host {a}")));
            }
            if !seen_edges.insert((a.min(b), a.max(b))) {
                return Err(Error::InvalidTopology(format!("duplicate link {a}-{b}")));
            }
            links.push(Link { a, b, up: true });
        }

        let mut owner = vec![false; num_hosts];
        for subnet in &subnets {
            for &h in subnet {
                if h >= num_hosts {
                    return Err(Error::UnknownHost(h));
                }
                if owner[h] {
                    return Err(Error::InvalidTopology(format!(
                        "host {h} belongs to more than one subnet"
                    )));
                }
                owner[h] = true;
            }
        }
        if let Some(h) = owner.iter().position(|&o| !o) {
            return Err(Error::InvalidTopology(format!("host {h} is in no subnet")));
        }

        if critical_server >= num_hosts {
            return Err(Error::UnknownHost(critical_server));
        }
        let mut entries = BTreeSet::new();
        for &e in &entry_points {
            if e >= num_hosts {
                return Err(Error::UnknownHost(e));
            }
            if e == critical_server {
                return Err(Error::InvalidTopology(
                    "critical server cannot be an entry point".into(),
                ));
            }
            if !entries.insert(e) {
                return Err(Error::InvalidTopology(format!("duplicate entry point {e}")));
            }
        }

        let mut incident = vec![Vec::new(); num_hosts];
        for (id, link) in links.iter().enumerate() {
            incident[link.a].push(id);
            incident[link.b].push(id);
        }

        let topology = Topology {
            num_hosts,
            links,
            subnets,
            critical_server,
            entry_points,
            incident,
        };
        let all_up = vec![true; topology.links.len()];
        let reach = topology.reachable_from(0, &all_up);
        if reach.iter().any(|&r| !r) {
            return Err(Error::InvalidTopology("graph is not connected".into()));
        }
        Ok(topology)
    }

    fn canonical() -> Self {
        let mut subnets = Vec::with_capacity(DEFAULT_SUBNET_SIZES.len());
        let mut next = 0;
        for size in DEFAULT_SUBNET_SIZES {
            subnets.push((next..next + size).collect::<Vec<_>>());
            next += size;
        }
        let gateways: Vec<HostId> = subnets.iter().map(|s| s[0]).collect();
        let members: Vec<&[HostId]> = subnets.iter().map(|s| &s[1..]).collect();

        let mut edges = Vec::with_capacity(DEFAULT_LINKS);
        for (gw, rest) in gateways.iter().zip(&members) {
            edges.extend(rest.iter().map(|&h| (*gw, h)));
        }
        for i in 0..gateways.len() {
            edges.push((gateways[i], gateways[(i + 1) % gateways.len()]));
        }
        for k in 0..REDUNDANCY_LINKS {
            let a = k % 4;
            let b = (a + 1) % 4;
            let i = k / 4;
            let ha = members[a][(2 * i + 1) % members[a].len()];
            let hb = members[b][(2 * i) % members[b].len()];
            edges.push((ha, hb));
        }

        let critical = *subnets[3].last().expect("subnet 4 is non-empty");
        let entries = subnets[..3].iter().map(|s| s[1]).collect();
        Topology::new(DEFAULT_HOSTS, &edges, subnets, critical, entries)
            .expect("canonical wiring is valid")
    }

    pub fn num_hosts(&self) -> usize {
        self.num_hosts
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> Result<&Link> {
        self.links.get(id).ok_or(Error::UnknownLink(id))
    }

    pub fn subnets(&self) -> &[Vec<HostId>] {
        &self.subnets
    }

    pub fn critical_server(&self) -> HostId {
        self.critical_server
    }

    pub fn entry_points(&self) -> &[HostId] {
        &self.entry_points
    }

    /// Ids of every link that touches `h`, in link-id order.
    pub fn incident_links(&self, h: HostId) -> Result<&[LinkId]> {
        self.check_host(h)?;
        Ok(&self.incident[h])
    }

    pub fn link_flags(&self) -> Vec<bool> {
        self.links.iter().map(|l| l.up).collect()
    }

    /// Hosts sharing an up link with `h`.
    pub fn neighbors(&self, h: HostId) -> Result<BTreeSet<HostId>> {
        self.neighbors_with(h, &self.link_flags())
    }

    /// Hosts sharing a link with `h`, where link status is taken from
    /// `link_up` instead of the topology's own flags.
    pub fn neighbors_with(&self, h: HostId, link_up: &[bool]) -> Result<BTreeSet<HostId>> {
        self.check_host(h)?;
        self.check_flags(link_up)?;
        Ok(self.incident[h]
            .iter()
            .filter(|&&id| link_up[id])
            .map(|&id| self.links[id].other(h))
            .collect())
    }

    /// Returns a copy with link `id` set to `up`.
    pub fn set_link(&self, id: LinkId, up: bool) -> Result<Topology> {
        let mut next = self.clone();
        next.set_link_in_place(id, up)?;
        Ok(next)
    }

    pub fn set_link_in_place(&mut self, id: LinkId, up: bool) -> Result<()> {
        let link = self.links.get_mut(id).ok_or(Error::UnknownLink(id))?;
        link.up = up;
        Ok(())
    }

    pub fn is_reachable(&self, src: HostId, dst: HostId) -> Result<bool> {
        self.check_host(src)?;
        self.check_host(dst)?;
        if src == dst {
            return Ok(true);
        }
        Ok(self.reachable_from(src, &self.link_flags())[dst])
    }

    /// Breadth-first reachability over links whose flag in `link_up` is set.
    pub fn reachable_from(&self, src: HostId, link_up: &[bool]) -> Vec<bool> {
        let mut seen = vec![false; self.num_hosts];
        let mut queue = VecDeque::from([src]);
        seen[src] = true;
        while let Some(h) = queue.pop_front() {
            for &id in &self.incident[h] {
                if !link_up[id] {
                    continue;
                }
                let n = self.links[id].other(h);
                if !seen[n] {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        seen
    }

    /// Plain-text adjacency listing: a `#` header carrying the metadata
    /// followed by one `link-id host-a host-b` line per link.
    pub fn to_adjacency_text(&self) -> String {
        let join = |v: &[usize]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let sizes: Vec<usize> = self.subnets.iter().map(|s| s.len()).collect();
        let mut out = String::new();
        let _ = writeln!(out, "{ADJACENCY_MAGIC}");
        let _ = writeln!(
            out,
            "# hosts={} subnets={} critical={} entries={}",
            self.num_hosts,
            join(&sizes),
            self.critical_server,
            join(&self.entry_points)
        );
        for (id, link) in self.links.iter().enumerate() {
            let _ = writeln!(out, "{id} {} {}", link.a, link.b);
        }
        out
    }

    /// Inverse of [`Topology::to_adjacency_text`]. Subnets are rebuilt as
    /// contiguous host ranges of the listed sizes.
    pub fn from_adjacency_text(text: &str) -> Result<Topology> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == ADJACENCY_MAGIC => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: "missing topology header".into(),
                })
            }
        }
        let (meta_no, meta) = lines.next().ok_or(Error::Parse {
            line: 2,
            message: "missing metadata line".into(),
        })?;
        let parse_err = |line: usize, message: String| Error::Parse {
            line: line as u64 + 1,
            message,
        };
        let list = |v: &str, line: usize| -> Result<Vec<usize>> {
            v.split(',')
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse()
                        .map_err(|_| parse_err(line, format!("bad number {s:?}")))
                })
                .collect()
        };

        let (mut hosts, mut sizes, mut critical, mut entries) = (None, None, None, None);
        for field in meta.trim_start_matches('#').split_whitespace() {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| parse_err(meta_no, format!("bad field {field:?}")))?;
            match k {
                "hosts" => hosts = Some(list(v, meta_no)?[0]),
                "subnets" => sizes = Some(list(v, meta_no)?),
                "critical" => critical = Some(list(v, meta_no)?[0]),
                "entries" => entries = Some(list(v, meta_no)?),
                _ => return Err(parse_err(meta_no, format!("unknown field {k:?}"))),
            }
        }
        let missing = |what: &str| parse_err(meta_no, format!("missing {what}"));
        let hosts = hosts.ok_or_else(|| missing("hosts"))?;
        let sizes = sizes.ok_or_else(|| missing("subnets"))?;
        let critical = critical.ok_or_else(|| missing("critical"))?;
        let entries = entries.ok_or_else(|| missing("entries"))?;

        let mut edges = Vec::new();
        for (no, line) in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let nums = line
                .split_whitespace()
                .map(|s| s.parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| parse_err(no, e.to_string()))?;
            if nums.len() != 3 {
                return Err(parse_err(no, "expected `link-id host-a host-b`".into()));
            }
            if nums[0] != edges.len() {
                return Err(parse_err(no, format!("link ids out of order at {}", nums[0])));
            }
            edges.push((nums[1], nums[2]));
        }

        let mut subnets = Vec::with_capacity(sizes.len());
        let mut next = 0;
        for size in sizes {
            subnets.push((next..next + size).collect());
            next += size;
        }
        Topology::new(hosts, &edges, subnets, critical, entries)
    }

    fn check_host(&self, h: HostId) -> Result<()> {
        if h < self.num_hosts {
            Ok(())
        } else {
            Err(Error::UnknownHost(h))
        }
    }

    fn check_flags(&self, link_up: &[bool]) -> Result<()> {
        if link_up.len() == self.links.len() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.links.len(),
                actual: link_up.len(),
            })
        }
    }
}
