use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::dataset::{at_line, check_connection, check_spike, NetworkDataset, NeuronKind};
use super::{NeuroError, NeuronId};

/// Dataset manifest; CSV paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub neurons: PathBuf,
    pub connections: PathBuf,
    pub spikes: PathBuf,
    #[serde(default = "default_units")]
    pub units: String,
}

fn default_units() -> String {
    "mm".into()
}

#[derive(Deserialize)]
struct NeuronRow {
    id: NeuronId,
    x: f32,
    y: f32,
    z: f32,
    kind: String,
}

#[derive(Deserialize)]
struct ConnectionRow {
    pre: NeuronId,
    post: NeuronId,
    weight: f32,
}

#[derive(Deserialize)]
struct SpikeRow {
    time: f64,
    neuron: NeuronId,
}

/// Calls `each` with every row and its 1-based line number (header is line 1).
fn read_rows<T: DeserializeOwned>(
    path: &Path,
    mut each: impl FnMut(T, u64) -> Result<(), NeuroError>,
) -> Result<(), NeuroError> {
    let file = path.display().to_string();
    let malformed = |line: u64, reason: String| NeuroError::MalformedRow {
        file: file.clone(),
        line,
        reason,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(std::io::BufReader::new(File::open(path)?));
    let headers = rdr.headers().map_err(|e| malformed(1, e.to_string()))?.clone();
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => return Ok(()),
            Ok(true) => {
                let line = record.position().map_or(0, |p| p.line());
                let row = record
                    .deserialize::<T>(Some(&headers))
                    .map_err(|e| malformed(line, e.to_string()))?;
                each(row, line)?;
            }
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                return Err(malformed(line, e.to_string()));
            }
        }
    }
}

fn parse_kind(s: &str) -> Option<NeuronKind> {
    match s.to_ascii_lowercase().as_str() {
        "input" => Some(NeuronKind::Input),
        "regular" => Some(NeuronKind::Regular),
        _ => None,
    }
}

pub fn load_dataset(manifest_path: &Path) -> Result<NetworkDataset, NeuroError> {
    let manifest: Manifest = serde_json::from_reader(std::io::BufReader::new(File::open(manifest_path)?))?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));

    let neurons_path = dir.join(&manifest.neurons);
    let neurons_file = neurons_path.display().to_string();
    let mut rows: Vec<(NeuronId, [f32; 3], NeuronKind, u64)> = Vec::new();
    read_rows::<NeuronRow>(&neurons_path, |r, line| {
        let kind = parse_kind(&r.kind).ok_or_else(|| NeuroError::MalformedRow {
            file: neurons_file.clone(),
            line,
            reason: format!("unknown neuron kind {:?}", r.kind),
        })?;
        rows.push((r.id, [r.x, r.y, r.z], kind, line));
        Ok(())
    })?;
    let mut first_line = std::collections::HashMap::with_capacity(rows.len());
    for &(id, _, _, line) in &rows {
        if first_line.insert(id, line).is_some() {
            return Err(NeuroError::DuplicateNeuronId {
                file: neurons_file,
                line,
                id,
            });
        }
    }
    drop(first_line);
    let n = rows.len();
    let mut positions = vec![[0.0f32; 3]; n];
    let mut kinds = vec![NeuronKind::Regular; n];
    let mut seen = vec![false; n];
    for &(id, p, k, _) in &rows {
        if let Some(slot) = seen.get_mut(id as usize) {
            *slot = true;
            positions[id as usize] = p;
            kinds[id as usize] = k;
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(NeuroError::MissingNeuronId(missing as NeuronId));
    }
    drop(rows);

    // Rows are checked here so errors point at real file lines.
    let conn_path = dir.join(&manifest.connections);
    let conn_file = conn_path.display().to_string();
    let mut connections = Vec::new();
    read_rows::<ConnectionRow>(&conn_path, |r, line| {
        let row_error = |e: NeuroError| at_line(e, &conn_file, line);
        check_connection(n, r.pre, r.post, r.weight).map_err(row_error)?;
        connections.push((r.pre, r.post, r.weight));
        Ok(())
    })?;
    let spike_path = dir.join(&manifest.spikes);
    let spike_file = spike_path.display().to_string();
    let mut spikes = Vec::new();
    read_rows::<SpikeRow>(&spike_path, |r, line| {
        check_spike(n, r.time, r.neuron).map_err(|e| at_line(e, &spike_file, line))?;
        spikes.push((r.time, r.neuron));
        Ok(())
    })?;

    NetworkDataset::from_parts(&manifest.name, &manifest.units, positions, kinds, connections, spikes)
}

/// Writes `manifest.json` plus the three CSV files into `dir`.
pub fn save_dataset(dataset: &NetworkDataset, dir: &Path) -> Result<PathBuf, NeuroError> {
    std::fs::create_dir_all(dir)?;
    let manifest = Manifest {
        name: dataset.name.clone(),
        neurons: "neurons.csv".into(),
        connections: "connections.csv".into(),
        spikes: "spikes.csv".into(),
        units: dataset.units.clone(),
    };
    let mut w = BufWriter::new(File::create(dir.join(&manifest.neurons))?);
    writeln!(w, "id,x,y,z,kind")?;
    for (i, (p, k)) in dataset.positions().iter().zip(dataset.kinds()).enumerate() {
        let kind = match k {
            NeuronKind::Input => "input",
            NeuronKind::Regular => "regular",
        };
        writeln!(w, "{i},{},{},{},{kind}", p[0], p[1], p[2])?;
    }
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join(&manifest.connections))?);
    writeln!(w, "pre,post,weight")?;
    for ((a, b), wt) in dataset
        .connection_pre()
        .zip(dataset.connection_post())
        .zip(dataset.connection_weight())
    {
        writeln!(w, "{a},{b},{wt}")?;
    }
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join(&manifest.spikes))?);
    writeln!(w, "time,neuron")?;
    for (t, id) in dataset.spike_times().iter().zip(dataset.spike_neurons()) {
        writeln!(w, "{t},{id}")?;
    }
    w.flush()?;
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&manifest)?)?;
    Ok(path)
}
