use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use voxelmap::codec::{publish_delta, read_frame, serialize_full, write_frame, CodecError, Replica};
use voxelmap::ingest::{convert_kitti, synth_log, FrameLog, IngestError, KittiSource, NoiseSlot, SceneSpec};
use voxelmap::query::{count_states, occluded, query_visit, QueryOptions};
use voxelmap::semantics::{mean_iou, ClassRemap, EvalConfig, Evaluator, LabelSet};
use voxelmap::{integrate_frame, IntegratorConfig, MapConfig, OccupancyMap, Predicate, Region, SlotSelection};
use voxelmap_cli::report::{FrameRow, RunReport};

use crate::{usage, BenchArgs, BuildArgs, ConvertArgs, EvalArgs, Format, Preset, QueryArgs, ServeArgs, SubscribeArgs, SynthArgs};

fn ingest_err(e: IngestError) -> anyhow::Error {
    match e {
        IngestError::NoFrames(_) | IngestError::InvalidSpec(_) => usage(e.to_string()),
        e => e.into(),
    }
}

fn open_log(path: &Path) -> Result<FrameLog> {
    FrameLog::open(path).map_err(ingest_err).with_context(|| format!("opening log {}", path.display()))
}

fn new_map(res: f64, depth: u8) -> Result<OccupancyMap> {
    OccupancyMap::new(MapConfig::with_resolution(res, depth)).map_err(|e| usage(e.to_string()))
}

fn integrator(max_range: f64, free_depth: u8, map: &OccupancyMap) -> Result<IntegratorConfig> {
    let cfg = IntegratorConfig {
        max_range,
        free_depth,
        ..Default::default()
    };
    cfg.validate(map.config()).map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn finish_report(report: &RunReport, text: Option<&PathBuf>, csv: Option<&PathBuf>) -> Result<()> {
    let t = report.to_text();
    print!("{t}");
    if let Some(p) = text {
        write_file(p, &t)?;
    }
    if let Some(p) = csv {
        write_file(p, report.to_csv())?;
    }
    Ok(())
}

fn fill_map_stats(report: &mut RunReport, map: &OccupancyMap, full_bytes: usize) -> Result<()> {
    report.memory_bytes = map.memory_bytes();
    report.nodes = map.node_count();
    report.full_bytes = full_bytes;
    let counts = count_states(map, &Region::Everything, 0)?;
    report.unknown = counts.unknown;
    report.free = counts.free;
    report.occupied = counts.occupied;
    Ok(())
}

pub fn build(a: &BuildArgs) -> Result<()> {
    let log = open_log(&a.log)?;
    let mut map = new_map(a.map.res, a.map.depth)?;
    let cfg = integrator(a.map.max_range, a.map.free_depth, &map)?;
    let slots = match &a.map.slots {
        Some(s) => SlotSelection::new(s),
        None if log.slots() > 0 => SlotSelection::single(0),
        None => SlotSelection::none(),
    };
    slots.validate(log.slots()).map_err(|e| usage(e.to_string()))?;

    let stream_path = a.stream.clone().unwrap_or_else(|| {
        let mut s = a.out.clone().into_os_string();
        s.push(".deltas");
        PathBuf::from(s)
    });
    let file = File::create(&stream_path).with_context(|| format!("creating {}", stream_path.display()))?;
    let mut stream = BufWriter::new(file);
    write_frame(&mut stream, &serialize_full(&map))?;

    let mut report = RunReport::new("build", a.map.res);
    for i in 0..log.len() {
        let frame = log.read_frame(i)?;
        let t0 = Instant::now();
        integrate_frame(&mut map, &frame, &cfg, &slots).with_context(|| format!("frame {i}"))?;
        let t1 = Instant::now();
        let delta = publish_delta(&mut map);
        let t2 = Instant::now();
        write_frame(&mut stream, &delta)?;
        report.frames.push(FrameRow {
            frame: i,
            points: frame.points.len(),
            integrate_s: (t1 - t0).as_secs_f64(),
            publish_s: (t2 - t1).as_secs_f64(),
            publish_bytes: delta.len(),
            query_s: None,
        });
    }
    stream.flush()?;
    let full = serialize_full(&map);
    write_file(&a.out, &full)?;
    fill_map_stats(&mut report, &map, full.len())?;
    finish_report(&report, a.report.as_ref(), a.csv.as_ref())
}

fn load_map(path: &Path) -> Result<OccupancyMap> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    voxelmap::codec::deserialize(&bytes).with_context(|| format!("decoding {}", path.display()))
}

pub fn query(a: &QueryArgs) -> Result<()> {
    let region: Region = a
        .region
        .parse()
        .map_err(|e: voxelmap::query::ParseError| usage(format!("invalid region\n{}", e.render(&a.region))))?;
    let pred: Predicate = a
        .pred
        .parse()
        .map_err(|e: voxelmap::query::ParseError| usage(format!("invalid predicate\n{}", e.render(&a.pred))))?;
    if !region.is_valid() {
        return Err(usage(format!("invalid region `{}`", a.region)));
    }
    let map = load_map(&a.map)?;
    if a.depth >= map.config().depth_levels {
        return Err(usage(format!("depth must be below {}", map.config().depth_levels)));
    }
    let config = *map.config();
    let out = std::io::stdout();
    let mut out = BufWriter::new(out.lock());
    if a.format == Format::Csv {
        writeln!(out, "depth,morton,x,y,z,state,top_label,timestep")?;
    }
    let mut io_err = None;
    query_visit(&map, &region, &pred, a.depth, QueryOptions { prune: !a.no_prune }, |code, p| {
        if io_err.is_some() {
            return;
        }
        let c = config.point_from_code(code);
        let state = p.state(&config).as_str();
        let label = p.semantics.top_label(None);
        let r = match a.format {
            Format::Text => {
                let label = label.map_or("-".to_string(), |l| l.to_string());
                writeln!(out, "{}:{} {} {} {} {state} {label} {}", code.depth(), code.morton(), c.x, c.y, c.z, p.timestep)
            }
            Format::Csv => {
                let label = label.map_or(String::new(), |l| l.to_string());
                writeln!(out, "{},{},{},{},{},{state},{label},{}", code.depth(), code.morton(), c.x, c.y, c.z, p.timestep)
            }
        };
        if let Err(e) = r {
            io_err = Some(e);
        }
    })?;
    if let Some(e) = io_err {
        return Err(e.into());
    }
    out.flush()?;
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let log = open_log(&a.log)?;
    let labels_path = match (&a.labels, log.labels_path()) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => p.to_path_buf(),
        (None, None) => return Err(usage("no --labels given and the log names no label file")),
    };
    let labels = LabelSet::load(&labels_path).with_context(|| format!("label set {}", labels_path.display()))?;
    let remap = match &a.remap {
        Some(p) => ClassRemap::load(p).with_context(|| format!("remap {}", p.display()))?,
        None => ClassRemap::default(),
    };
    let mut cfg = EvalConfig::new(a.gt_slot, a.net_slot);
    if let Some(f) = &a.fuse_slots {
        cfg.fuse_slots = f.clone();
    }
    let fused = cfg.fuse_slots.len() > 1;
    let k = log.slots();
    let needed: Vec<usize> = [a.gt_slot, a.net_slot].into_iter().chain(cfg.fuse_slots.iter().copied()).collect();
    SlotSelection::new(&needed).validate(k).map_err(|e| usage(e.to_string()))?;
    let map = new_map(a.res, a.depth)?;
    cfg.integrator = integrator(a.max_range, 0, &map)?;
    let target = labels.remapped(&remap)?;
    let mut ev = Evaluator::new(*map.config(), &labels, remap, cfg)?;
    for i in 0..log.len() {
        ev.push_frame(log.read_frame(i)?).with_context(|| format!("frame {i}"))?;
    }
    let points = ev.points();
    let (single, mapped) = ev.finish();
    let rows = [("single", mean_iou(&single)), (if fused { "map_fusion" } else { "map" }, mean_iou(&mapped))];

    let names: Vec<String> = single.classes().iter().map(|&c| target.name(c).replace(' ', "_")).collect();
    let widths: Vec<usize> = names.iter().map(|n| n.len().max(5)).collect();
    let mut text = format!("points {points}\n{:<11}", "method");
    for (n, w) in names.iter().zip(&widths) {
        text.push_str(&format!(" {n:>w$}"));
    }
    text.push_str("  mIoU\n");
    let mut report = RunReport::new("eval", a.res);
    for (method, r) in &rows {
        text.push_str(&format!("{method:<11}"));
        for ((c, v), w) in r.per_class.iter().zip(&widths) {
            text.push_str(&format!(" {:>w$.1}", 100.0 * v));
            report.iou.push((method.to_string(), target.name(*c).replace(' ', "_"), 100.0 * v));
        }
        text.push_str(&format!(" {:>5.1}\n", r.miou));
    }
    print!("{text}");
    if let Some(p) = &a.report {
        write_file(p, report.to_text())?;
    }
    Ok(())
}

pub fn bench(a: &BenchArgs) -> Result<()> {
    let log = open_log(&a.log)?;
    if a.query_extent.len() != 3 {
        return Err(usage("--query-extent needs three values"));
    }
    let mut reports = Vec::new();
    for &res in &a.res {
        let mut map = new_map(res, a.depth)?;
        let cfg = integrator(a.max_range, 0, &map)?;
        let slots = if log.slots() > 0 { SlotSelection::single(0) } else { SlotSelection::none() };
        let qdepth = a.query_depth.min(a.depth - 1);
        let mut report = RunReport::new("bench", res);
        for i in 0..log.len() {
            let frame = log.read_frame(i)?;
            let t0 = Instant::now();
            integrate_frame(&mut map, &frame, &cfg, &slots).with_context(|| format!("frame {i}"))?;
            let t1 = Instant::now();
            let delta = publish_delta(&mut map);
            let t2 = Instant::now();
            let o = frame.pose.origin();
            let e = &a.query_extent;
            let region = Region::aabb([o.x - e[0], o.y - e[1], o.z - e[2]], [o.x + e[0], o.y + e[1], o.z + e[2]]);
            let hits = occluded(&map, &region, frame.timestep, a.stale_after, qdepth)?;
            let t3 = Instant::now();
            std::hint::black_box(hits);
            report.frames.push(FrameRow {
                frame: i,
                points: frame.points.len(),
                integrate_s: (t1 - t0).as_secs_f64(),
                publish_s: (t2 - t1).as_secs_f64(),
                publish_bytes: delta.len(),
                query_s: Some((t3 - t2).as_secs_f64()),
            });
        }
        let full = serialize_full(&map);
        fill_map_stats(&mut report, &map, full.len())?;
        print!("{}", report.to_text());
        let warmup = (log.len() / 2).min(5);
        if report.full_bytes > 0 && log.len() > warmup {
            println!("delta_full_ratio {}", report.mean_publish_bytes(warmup) / report.full_bytes as f64);
        }
        println!();
        reports.push(report);
    }
    for w in reports.windows(2) {
        if w[1].nodes > 0 {
            println!(
                "node_ratio {}/{} {}",
                w[0].resolution,
                w[1].resolution,
                w[0].nodes as f64 / w[1].nodes as f64
            );
            println!(
                "memory_ratio {}/{} {}",
                w[0].resolution,
                w[1].resolution,
                w[0].memory_bytes as f64 / w[1].memory_bytes as f64
            );
        }
    }
    if let Some(p) = &a.report {
        write_file(p, reports.iter().map(RunReport::to_text).collect::<Vec<_>>().join("\n"))?;
    }
    if let Some(p) = &a.csv {
        let mut s = format!("{}\n", RunReport::csv_header());
        for r in &reports {
            s.push_str(&r.to_csv_rows());
        }
        write_file(p, s)?;
    }
    Ok(())
}

pub fn serve(a: &ServeArgs) -> Result<()> {
    let file = File::open(&a.map_stream).with_context(|| format!("opening {}", a.map_stream.display()))?;
    let mut r = BufReader::new(file);
    let mut frames = Vec::new();
    while let Some(f) = read_frame(&mut r).with_context(|| format!("reading {}", a.map_stream.display()))? {
        frames.push(f);
    }
    let listener = TcpListener::bind(&a.listen).with_context(|| format!("binding {}", a.listen))?;
    println!("listening {}", listener.local_addr()?);
    std::io::stdout().flush()?;
    for _ in 0..a.clients {
        let (sock, peer) = listener.accept()?;
        let mut w = BufWriter::new(sock);
        for f in &frames {
            write_frame(&mut w, f).with_context(|| format!("sending to {peer}"))?;
        }
        w.flush()?;
        eprintln!("served {} frames to {peer}", frames.len());
    }
    Ok(())
}

fn connect(addr: &str, timeout: f64) -> Result<TcpStream> {
    let deadline = Instant::now() + Duration::from_secs_f64(timeout.max(0.0));
    loop {
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(e) if Instant::now() >= deadline => return Err(e).with_context(|| format!("connecting to {addr}")),
            Err(_) => std::thread::sleep(Duration::from_millis(50)),
        }
    }
}

fn describe_seq(seq: Option<u64>) -> String {
    seq.map_or("none".to_string(), |s| s.to_string())
}

pub fn subscribe(a: &SubscribeArgs) -> Result<()> {
    let mut replica = match &a.base {
        Some(p) => Replica::resume(load_map(p)?),
        None => Replica::new(),
    };
    let sock = connect(&a.connect, a.connect_timeout)?;
    let mut r = BufReader::new(sock);
    let mut frames = 0usize;
    loop {
        let frame = match read_frame(&mut r) {
            Ok(Some(f)) => f,
            Ok(None) => break,
            Err(e) => {
                let what = match e {
                    CodecError::CorruptStream(_) | CodecError::Io(_) => "connection lost",
                    _ => "stream error",
                };
                bail!("{what}: {e}; last applied sequence {}", describe_seq(replica.last_sequence()));
            }
        };
        if let Err(e) = replica.apply_frame(&frame) {
            bail!("{e}; last applied sequence {}", describe_seq(replica.last_sequence()));
        }
        frames += 1;
    }
    let Some(map) = replica.map() else {
        bail!("stream ended before any snapshot");
    };
    write_file(&a.out, serialize_full(map))?;
    println!("frames {frames}");
    println!("last_sequence {}", describe_seq(replica.last_sequence()));
    println!("nodes {}", map.node_count());
    Ok(())
}

pub fn convert(a: &ConvertArgs) -> Result<()> {
    let src = KittiSource {
        velodyne: a.kitti_velodyne.clone(),
        labels: a.kitti_labels.clone(),
        extra_labels: a.net_labels.clone(),
        poses: a.poses.clone(),
    };
    let log = convert_kitti(&src, &a.out, a.labels.as_deref()).map_err(ingest_err)?;
    println!("frames {}", log.len());
    println!("slots {}", log.slots());
    Ok(())
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let mut spec = match &a.scene {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<SceneSpec>(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
        }
        None => match a.preset {
            Preset::City => SceneSpec::city_street(a.blocks),
            Preset::Desk => SceneSpec::desk_boxes(),
            Preset::Isolated => SceneSpec::isolated_boxes(),
        },
    };
    if !a.noise.is_empty() {
        spec.noise = a.noise.iter().map(|&r| NoiseSlot::uniform(r)).collect();
    }
    if a.print_scene {
        writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&spec)?)?;
        return Ok(());
    }
    let out = a.out.as_deref().ok_or_else(|| usage("--out is required"))?;
    let log = synth_log(&spec, a.frames, a.seed, out).map_err(ingest_err)?;
    println!("frames {}", log.len());
    println!("slots {}", log.slots());
    Ok(())
}
