use std::fs;
use std::path::Path;

use voxelmap::ingest::{
    convert_kitti, encode_labels, encode_points, encode_scan, format_pose_line, synth_frame, synth_log, FrameLog, IngestError, KittiSource,
    NoiseSlot, SceneSpec, Sensor,
};
use voxelmap::{PointRecord, Pose, Rgb};

fn small_city() -> SceneSpec {
    let mut s = SceneSpec::city_block();
    s.sensor = Sensor {
        azimuth_beams: 120,
        elevation_beams: 16,
        ..s.sensor
    };
    s
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn synth_is_byte_deterministic() {
    let spec = small_city().with_noise([NoiseSlot::uniform(0.3)]);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth_log(&spec, 4, 17, a.path()).unwrap();
    synth_log(&spec, 4, 17, b.path()).unwrap();
    assert_eq!(dir_bytes(a.path()), dir_bytes(b.path()));
    let c = tempfile::tempdir().unwrap();
    synth_log(&spec, 4, 18, c.path()).unwrap();
    assert_ne!(dir_bytes(a.path()), dir_bytes(c.path()));
}

#[test]
fn read_write_round_trip() {
    let spec = small_city().with_noise([NoiseSlot::uniform(0.3)]);
    let tmp = tempfile::tempdir().unwrap();
    let log = synth_log(&spec, 3, 5, tmp.path()).unwrap();
    assert_eq!(log.slots(), 2);
    for i in 0..log.len() {
        let f = log.read_frame(i).unwrap();
        let on_disk = fs::read(tmp.path().join(format!("{i:06}.pts"))).unwrap();
        assert_eq!(encode_points(&f.points, f.label_slots), on_disk);
        assert_eq!(f, synth_frame(&spec, i, 5).unwrap());
    }
}

/// Distance from `p` to the nearest surface of the scene.
fn surface_distance(spec: &SceneSpec, p: [f64; 3]) -> f64 {
    let mut best = f64::INFINITY;
    if let Some(g) = &spec.ground {
        best = (p[2] - g.height).abs();
    }
    for b in &spec.boxes {
        // Distance to the box boundary, for points outside or on it.
        let outside: f64 = (0..3).map(|a| (b.min[a] - p[a]).max(p[a] - b.max[a]).max(0.0).powi(2)).sum::<f64>().sqrt();
        let inside = (0..3).map(|a| (p[a] - b.min[a]).min(b.max[a] - p[a])).fold(f64::INFINITY, f64::min);
        best = best.min(if outside > 0.0 { outside } else { inside.max(0.0) });
    }
    best
}

#[test]
fn points_lie_on_scene_surfaces() {
    let spec = small_city();
    let beam_step = (spec.sensor.elevation_max - spec.sensor.elevation_min).to_radians() / f64::from(spec.sensor.elevation_beams);
    for i in [0, 7, 20] {
        let f = synth_frame(&spec, i, 3).unwrap();
        assert!(f.points.len() > 500);
        for pt in &f.points {
            let w = f.pose.transform(&pt.position_f64());
            let range = pt.position_f64().coords.norm();
            assert!(range <= spec.sensor.max_range + 1e-4);
            let d = surface_distance(&spec, [w.x, w.y, w.z]);
            assert!(d <= 0.5 * beam_step * range, "frame {i}: {d} from any surface");
            assert!(d < 1e-4, "frame {i}: {d} from any surface");
        }
    }
}

#[test]
fn flip_fraction_concentrates() {
    let spec = small_city().with_noise([NoiseSlot::uniform(0.3)]);
    let mut total = 0usize;
    let mut flipped = 0usize;
    let mut i = 0;
    while total < 100_000 {
        let f = synth_frame(&spec, i, 11).unwrap();
        total += f.points.len();
        flipped += f.points.iter().filter(|p| p.labels[0] != p.labels[1]).count();
        i += 1;
    }
    let frac = flipped as f64 / total as f64;
    assert!((frac - 0.3).abs() <= 0.01, "flip fraction {frac}");
    // Flips land on other scene labels only.
    let pool = spec.label_pool();
    let f = synth_frame(&spec, 0, 11).unwrap();
    assert!(f.points.iter().all(|p| pool.contains(&p.labels[1])));
}

fn write_kitti(root: &Path, scans: &[Vec<[f32; 4]>], labels: &[Vec<u32>], poses: &[Pose]) -> KittiSource {
    let velodyne = root.join("velodyne");
    let label_dir = root.join("labels");
    fs::create_dir_all(&velodyne).unwrap();
    fs::create_dir_all(&label_dir).unwrap();
    for (i, (s, l)) in scans.iter().zip(labels).enumerate() {
        fs::write(velodyne.join(format!("{i:06}.bin")), encode_scan(s)).unwrap();
        fs::write(label_dir.join(format!("{i:06}.label")), encode_labels(l)).unwrap();
    }
    let text: String = poses.iter().map(|p| format_pose_line(p) + "\n").collect();
    fs::write(root.join("poses.txt"), text).unwrap();
    KittiSource {
        velodyne,
        labels: label_dir,
        extra_labels: vec![],
        poses: root.join("poses.txt"),
    }
}

#[test]
fn kitti_round_trip() {
    // Native frames -> dataset layout -> converter -> same point sets.
    let spec = small_city();
    let frames: Vec<_> = (0..3).map(|i| synth_frame(&spec, i, 2).unwrap()).collect();
    let scans: Vec<Vec<[f32; 4]>> = frames
        .iter()
        .map(|f| f.points.iter().map(|p| [p.position[0], p.position[1], p.position[2], 0.5]).collect())
        .collect();
    let labels: Vec<Vec<u32>> = frames
        .iter()
        .map(|f| f.points.iter().enumerate().map(|(j, p)| u32::from(p.labels[0]) | ((j as u32 % 7) << 16)).collect())
        .collect();
    let poses: Vec<Pose> = frames.iter().map(|f| f.pose).collect();
    let tmp = tempfile::tempdir().unwrap();
    let src = write_kitti(tmp.path(), &scans, &labels, &poses);
    let log = convert_kitti(&src, tmp.path().join("log"), None).unwrap();
    assert_eq!(log.len(), 3);
    for (i, want) in frames.iter().enumerate() {
        let got = log.read_frame(i).unwrap();
        assert_eq!(got.pose, want.pose);
        let expect: Vec<PointRecord> = want.points.iter().map(|p| PointRecord::new(p.position, Rgb::default(), &p.labels)).collect();
        assert_eq!(got.points, expect);
    }
}

#[test]
fn kitti_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let src = write_kitti(tmp.path(), &[], &[], &[]);
    assert!(matches!(convert_kitti(&src, tmp.path().join("a"), None), Err(IngestError::NoFrames(_))));

    let tmp = tempfile::tempdir().unwrap();
    let src = write_kitti(tmp.path(), &[vec![[0.0; 4]; 3]], &[vec![1, 2]], &[Pose::identity()]);
    assert!(matches!(convert_kitti(&src, tmp.path().join("b"), None), Err(IngestError::CountMismatch(_))));

    let tmp = tempfile::tempdir().unwrap();
    let src = write_kitti(tmp.path(), &[vec![[0.0; 4]; 2]], &[vec![1, 2]], &[Pose::identity(), Pose::identity()]);
    assert!(matches!(convert_kitti(&src, tmp.path().join("c"), None), Err(IngestError::CountMismatch(_))));
}

#[test]
fn empty_log_opens() {
    let tmp = tempfile::tempdir().unwrap();
    let w = voxelmap::ingest::LogWriter::create(tmp.path(), 1, None).unwrap();
    let log = w.finish().unwrap();
    assert!(log.is_empty());
    assert_eq!(FrameLog::open(tmp.path()).unwrap().len(), 0);
}
