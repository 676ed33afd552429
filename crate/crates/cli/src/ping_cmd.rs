use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use octkit::gmp::{Endpoint, GmpConfig, ProtocolEvent};
use octkit::netsim::{GmpHost, ScenarioConfig, Simulation};
use octkit::rpc::RpcRuntime;

use crate::{emit, runtime, scenario, Cli, CliError, Effective, Format};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long, default_value_t = 10)]
    pub count: u32,
    /// Payload bytes per message.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 100)]
    pub interval_ms: u64,
    /// Override the cross-rack loss probability of the scenario.
    #[arg(long)]
    pub loss: Option<f64>,
    /// Source leaf name (simulation).
    #[arg(long)]
    pub from: Option<String>,
    /// Destination leaf name (simulation); defaults to the last leaf.
    #[arg(long)]
    pub to: Option<String>,
    /// Ping between two real UDP sockets on 127.0.0.1 instead.
    #[arg(long)]
    pub udp: bool,
    #[arg(long, default_value_t = 5_000)]
    pub timeout_ms: u64,
}

struct Ping {
    seq: u32,
    rtt: Option<Duration>,
}

fn render(pings: &[Ping], size: usize, fmt: Format, comments: &str) -> String {
    let mut out = String::new();
    for c in comments.lines() {
        let _ = writeln!(out, "# {c}");
    }
    match fmt {
        Format::Csv => out.push_str("seq,bytes,rtt_ms,status\n"),
        Format::Text => {
            let _ = writeln!(
                out,
                "{:>6} {:>8} {:>12} {:>6}",
                "seq", "bytes", "rtt_ms", "status"
            );
        }
    }
    for p in pings {
        let rtt = p
            .rtt
            .map_or_else(String::new, |d| format!("{:.3}", d.as_secs_f64() * 1e3));
        let status = if p.rtt.is_some() { "ok" } else { "lost" };
        match fmt {
            Format::Csv => {
                let _ = writeln!(out, "{},{size},{rtt},{status}", p.seq);
            }
            Format::Text => {
                let _ = writeln!(out, "{:>6} {size:>8} {rtt:>12} {status:>6}", p.seq);
            }
        }
    }
    out
}

fn summary(pings: &[Ping]) {
    let rtts: Vec<f64> = pings
        .iter()
        .filter_map(|p| p.rtt)
        .map(|d| d.as_secs_f64() * 1e3)
        .collect();
    if rtts.is_empty() {
        eprintln!("{} sent, 0 acknowledged", pings.len());
        return;
    }
    let min = rtts.iter().copied().fold(f64::INFINITY, f64::min);
    let max = rtts.iter().copied().fold(0.0, f64::max);
    let avg = rtts.iter().sum::<f64>() / rtts.len() as f64;
    eprintln!(
        "{} sent, {} acknowledged, rtt min/avg/max = {min:.3}/{avg:.3}/{max:.3} ms",
        pings.len(),
        rtts.len()
    );
}

fn sim_ping(cli: &Cli, a: &Args, eff: &mut Effective) -> Result<Vec<Ping>, CliError> {
    let mut sc = scenario(cli, ScenarioConfig::oct4())?;
    if let Some(p) = a.loss {
        sc.inter_loss = p;
        sc.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    eff.scenario(&sc);
    let (topo, leaves) = sc.topology();
    let find = |name: &Option<String>, default| match name {
        None => Ok(default),
        Some(n) => topo
            .find(n)
            .filter(|&id| topo.is_leaf(id))
            .ok_or_else(|| CliError::Usage(format!("no leaf named {n:?}"))),
    };
    let from = find(&a.from, leaves[0])?;
    let to = find(&a.to, *leaves.last().unwrap())?;
    if from == to {
        return Err(CliError::Usage("--from and --to must differ".into()));
    }
    eff.set("from", topo.name(from));
    eff.set("to", topo.name(to));
    let mut sim = Simulation::new(sc.build().map_err(runtime)?);
    let cfg = GmpConfig::default();
    sim.add_node(
        from,
        GmpHost::new(Endpoint::with_session(1, cfg.clone()).unwrap()),
    )
    .map_err(runtime)?;
    sim.add_node(to, GmpHost::new(Endpoint::with_session(2, cfg).unwrap()))
        .map_err(runtime)?;
    let mut sent = BTreeMap::new();
    for i in 0..a.count {
        let at = Duration::from_millis(a.interval_ms * u64::from(i));
        sim.run_until(at);
        let h = sim
            .with_node(from, |h, now| h.endpoint.send(to, vec![0x5a; a.size], now))
            .unwrap()
            .map_err(runtime)?;
        sent.insert(h, (i, at));
    }
    sim.run_until_idle(Duration::from_secs(3600));
    let mut rtt = BTreeMap::new();
    for (t, e) in &sim.node(from).unwrap().events {
        if let ProtocolEvent::AckProcessed(h) = e {
            if let Some(&(i, at)) = sent.get(h) {
                rtt.insert(i, *t - at);
            }
        }
    }
    Ok((0..a.count)
        .map(|i| Ping {
            seq: i,
            rtt: rtt.get(&i).copied(),
        })
        .collect())
}

fn udp_ping(a: &Args) -> Result<Vec<Ping>, CliError> {
    let server = RpcRuntime::bind("127.0.0.1:0", GmpConfig::default(), 1).map_err(runtime)?;
    server
        .register("ping", |b| Ok(b.to_vec()))
        .map_err(runtime)?;
    let client = RpcRuntime::bind("127.0.0.1:0", GmpConfig::default(), 1).map_err(runtime)?;
    let mut pings = Vec::new();
    for i in 0..a.count {
        if i > 0 {
            std::thread::sleep(Duration::from_millis(a.interval_ms));
        }
        let t = Instant::now();
        let r = client.call(
            server.local_addr(),
            "ping",
            vec![0x5a; a.size],
            Duration::from_millis(a.timeout_ms),
        );
        pings.push(Ping {
            seq: i,
            rtt: r.ok().map(|_| t.elapsed()),
        });
    }
    client.shutdown();
    server.shutdown();
    Ok(pings)
}

pub fn run(cli: &Cli, a: &Args) -> Result<(), CliError> {
    if a.count == 0 {
        return Err(CliError::Usage("--count must be at least 1".into()));
    }
    let mut eff = Effective::new(cli, "gmp-ping");
    eff.set("transport", if a.udp { "udp" } else { "sim" });
    eff.set("count", a.count);
    eff.set("size", a.size);
    eff.set("interval_ms", a.interval_ms);
    let pings = if a.udp {
        if cli.config.is_some() || a.loss.is_some() || a.from.is_some() || a.to.is_some() {
            return Err(CliError::Usage(
                "--udp does not take --config, --loss, --from or --to".into(),
            ));
        }
        eff.set("timeout_ms", a.timeout_ms);
        udp_ping(a)?
    } else {
        sim_ping(cli, a, &mut eff)?
    };
    summary(&pings);
    emit(
        cli.out.as_deref(),
        &render(&pings, a.size, cli.format, &eff.render()),
    )
}
