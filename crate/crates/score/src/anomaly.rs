use vad_core::{DenseMap, Error, MapKind, Result};

/// Per-pixel absolute student-teacher difference summed over channels.
pub fn anomaly_map(student: &DenseMap, teacher: &DenseMap) -> Result<DenseMap> {
    if !student.same_plane(teacher) || student.channels != teacher.channels {
        return Err(Error::contract(format!(
            "student map {}x{}x{} does not match teacher map {}x{}x{}",
            student.height,
            student.width,
            student.channels,
            teacher.height,
            teacher.width,
            teacher.channels
        )));
    }
    let values = student
        .values
        .chunks_exact(student.channels)
        .zip(teacher.values.chunks_exact(teacher.channels))
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
        .collect();
    DenseMap::new(MapKind::Anomaly, student.height, student.width, 1, values)
}

/// Sum of every pixel of an anomaly map.
pub fn frame_score(map: &DenseMap) -> Result<f64> {
    if map.kind != MapKind::Anomaly {
        return Err(Error::contract(format!(
            "expected an anomaly map, got {:?}",
            map.kind
        )));
    }
    Ok(map.values.iter().map(|&v| v as f64).sum())
}
