//! File formats: GeoJSON layers in, ground-truth CSV in, alignment CSV
//! out (and back in), N-Triples `owl:sameAs` export.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::model::{
    AlignmentPair, AlignmentResult, Entity, Geometry, GeometryKind, GroundTruth, MapLayer,
    PairScore, Point,
};

pub const ALIGNMENT_HEADER: [&str; 5] = ["id_a", "id_b", "provenance", "metric", "score"];
pub const OWL_SAME_AS: &str = "http://www.w3.org/2002/07/owl#sameAs";

/// Everything outside the RFC 3986 unreserved set is escaped.
const URN_ESCAPE: &AsciiSet = &NON_ALPHANUMERIC
    .remove(b'-')
    .remove(b'.')
    .remove(b'_')
    .remove(b'~');

/// Optional foreign members on a FeatureCollection describing the map.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LayerMetadata {
    pub map_id: Option<String>,
    pub year: Option<i32>,
    pub georeferenced: Option<bool>,
}

fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
}

fn feature_collection<'v>(path: &Path, doc: &'v Value) -> Result<&'v Map<String, Value>> {
    let obj = doc
        .as_object()
        .filter(|o| o.get("type").and_then(Value::as_str) == Some("FeatureCollection"))
        .ok_or_else(|| Error::parse(path, "not a GeoJSON FeatureCollection"))?;
    Ok(obj)
}

pub fn read_layer_metadata(path: impl AsRef<Path>) -> Result<LayerMetadata> {
    let path = path.as_ref();
    let doc = read_json(path)?;
    let fc = feature_collection(path, &doc)?;
    Ok(LayerMetadata {
        map_id: fc.get("map_id").and_then(Value::as_str).map(str::to_string),
        year: fc
            .get("year")
            .and_then(Value::as_i64)
            .and_then(|y| i32::try_from(y).ok()),
        georeferenced: fc.get("georeferenced").and_then(Value::as_bool),
    })
}

/// Loads and validates a GeoJSON FeatureCollection of Point, LineString and
/// single-ring Polygon features, each with a string `id` property.
pub fn load_layer(
    path: impl AsRef<Path>,
    map_id: &str,
    year: i32,
    georeferenced: bool,
) -> Result<MapLayer> {
    let path = path.as_ref();
    let doc = read_json(path)?;
    let fc = feature_collection(path, &doc)?;
    let features = fc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::parse(path, "missing \"features\" array"))?;
    let mut entities = Vec::with_capacity(features.len());
    for (n, f) in features.iter().enumerate() {
        entities.push(parse_feature(path, n, f)?);
    }
    MapLayer::new(map_id, year, georeferenced, entities)
}

fn parse_feature(path: &Path, n: usize, f: &Value) -> Result<Entity> {
    let props = f
        .get("properties")
        .and_then(Value::as_object)
        .ok_or_else(|| Error::parse(path, format!("feature {n}: missing properties")))?;
    let id = props
        .get("id")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::parse(path, format!("feature {n}: missing string property \"id\"")))?
        .to_string();
    let name = match props.get("name") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) if s.trim().is_empty() => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => {
            return Err(Error::parse(
                path,
                format!("feature \"{id}\": property \"name\" is not a string"),
            ))
        }
    };
    let geom = f
        .get("geometry")
        .and_then(Value::as_object)
        .ok_or_else(|| Error::parse(path, format!("feature \"{id}\": missing geometry")))?;
    let gtype = geom.get("type").and_then(Value::as_str).unwrap_or("");
    let coords = geom.get("coordinates").unwrap_or(&Value::Null);
    let bad_coords = || Error::parse(path, format!("feature \"{id}\": malformed coordinates"));
    let degenerate = |source| Error::DegenerateGeometry {
        id: id.clone(),
        source,
    };
    let geometry = match gtype {
        "Point" => Geometry::point(parse_position(coords).ok_or_else(bad_coords)?).map_err(degenerate)?,
        "LineString" => Geometry::polyline(parse_positions(coords).ok_or_else(bad_coords)?)
            .map_err(degenerate)?,
        "Polygon" => {
            let rings = coords.as_array().ok_or_else(bad_coords)?;
            if rings.len() != 1 {
                return Err(Error::UnsupportedGeometry {
                    id,
                    geometry_type: format!("Polygon with {} rings (holes are not supported)", rings.len()),
                });
            }
            Geometry::polygon(parse_positions(&rings[0]).ok_or_else(bad_coords)?).map_err(degenerate)?
        }
        other => {
            return Err(Error::UnsupportedGeometry {
                id,
                geometry_type: other.to_string(),
            })
        }
    };
    Entity::new(id, name, geometry)
}

fn parse_position(v: &Value) -> Option<Point> {
    let a = v.as_array()?;
    if a.len() < 2 {
        return None;
    }
    Some(Point::new(a[0].as_f64()?, a[1].as_f64()?))
}

fn parse_positions(v: &Value) -> Option<Vec<Point>> {
    v.as_array()?.iter().map(parse_position).collect()
}

/// Writes a layer as a FeatureCollection, carrying map id, year and
/// georeference flag as foreign members.
pub fn write_layer(layer: &MapLayer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let pos = |p: &Point| json!([p.x, p.y]);
    let features: Vec<Value> = layer
        .entities()
        .iter()
        .map(|e| {
            let g = e.geometry();
            let geometry = match g.kind() {
                GeometryKind::Point => json!({"type": "Point", "coordinates": pos(&g.vertices()[0])}),
                GeometryKind::Polyline => json!({
                    "type": "LineString",
                    "coordinates": g.vertices().iter().map(pos).collect::<Vec<_>>(),
                }),
                GeometryKind::Polygon => {
                    let mut ring: Vec<Value> = g.vertices().iter().map(pos).collect();
                    ring.push(pos(&g.vertices()[0]));
                    json!({"type": "Polygon", "coordinates": [ring]})
                }
            };
            let mut props = Map::new();
            props.insert("id".into(), json!(e.id()));
            if let Some(n) = e.name() {
                props.insert("name".into(), json!(n));
            }
            json!({"type": "Feature", "properties": props, "geometry": geometry})
        })
        .collect();
    let doc = json!({
        "type": "FeatureCollection",
        "map_id": layer.map_id(),
        "year": layer.year(),
        "georeferenced": layer.georeferenced(),
        "features": features,
    });
    let mut text = serde_json::to_string(&doc).map_err(|e| Error::parse(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_reader(path: &Path) -> Result<(csv::Reader<File>, usize, usize)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = rdr.headers().map_err(|e| Error::parse(path, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let (ia, ib) = (col("id_a")?, col("id_b")?);
    Ok((rdr, ia, ib))
}

/// Reads a ground-truth CSV with header `id_a,id_b`.
pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruth> {
    let path = path.as_ref();
    let (mut rdr, ia, ib) = csv_reader(path)?;
    let mut pairs = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(path, e))?;
        pairs.push((rec[ia].to_string(), rec[ib].to_string()));
    }
    GroundTruth::from_pairs(pairs)
}

pub fn write_ground_truth(truth: &GroundTruth, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(["id_a", "id_b"]).map_err(|e| Error::parse(path, e))?;
    for (a, b) in truth.pairs() {
        w.write_record([a, b]).map_err(|e| Error::parse(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

/// Writes `id_a,id_b,provenance,metric,score` rows sorted by (id_a, id_b).
pub fn write_alignment(result: &AlignmentResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(ALIGNMENT_HEADER).map_err(|e| Error::parse(path, e))?;
    for p in result.pairs() {
        let (metric, score) = match &p.score {
            Some(s) => (s.metric.as_str().to_string(), s.value.to_string()),
            None => (String::new(), String::new()),
        };
        w.write_record([
            p.id_a.as_str(),
            p.id_b.as_str(),
            p.provenance.as_str(),
            metric.as_str(),
            score.as_str(),
        ])
        .map_err(|e| Error::parse(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parses a file produced by [`write_alignment`]. Only `id_a` and `id_b` are
/// required; a missing provenance reads as `refined`.
pub fn read_alignment(path: impl AsRef<Path>) -> Result<AlignmentResult> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = rdr.headers().map_err(|e| Error::parse(path, e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let ia = col("id_a").ok_or_else(|| Error::MissingColumn("id_a".into()))?;
    let ib = col("id_b").ok_or_else(|| Error::MissingColumn("id_b".into()))?;
    let (iprov, imetric, iscore) = (col("provenance"), col("metric"), col("score"));
    let mut result = AlignmentResult::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(path, e))?;
        let field = |i: Option<usize>| i.and_then(|i| rec.get(i)).unwrap_or("");
        let provenance = match field(iprov) {
            "" => crate::model::Provenance::Refined,
            s => s.parse().map_err(|m: String| Error::parse(path, m))?,
        };
        let score = match (field(imetric), field(iscore)) {
            ("", _) | (_, "") => None,
            (m, s) => Some(PairScore {
                metric: m.parse().map_err(|m: String| Error::parse(path, m))?,
                value: s
                    .parse()
                    .map_err(|_| Error::parse(path, format!("bad score \"{s}\"")))?,
            }),
        };
        result.insert(AlignmentPair {
            id_a: rec[ia].to_string(),
            id_b: rec[ib].to_string(),
            provenance,
            score,
        })?;
    }
    Ok(result)
}

pub fn entity_urn(map_id: &str, id: &str) -> String {
    format!(
        "urn:map:{}:{}",
        utf8_percent_encode(map_id, URN_ESCAPE),
        utf8_percent_encode(id, URN_ESCAPE)
    )
}

/// One `owl:sameAs` triple per pair, in (id_a, id_b) order.
pub fn sameas_triples(result: &AlignmentResult, map_a: &MapLayer, map_b: &MapLayer) -> Vec<String> {
    result
        .pairs()
        .map(|p| {
            format!(
                "<{}> <{}> <{}> .",
                entity_urn(map_a.map_id(), &p.id_a),
                OWL_SAME_AS,
                entity_urn(map_b.map_id(), &p.id_b)
            )
        })
        .collect()
}

pub fn export_sameas_triples(
    result: &AlignmentResult,
    map_a: &MapLayer,
    map_b: &MapLayer,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    result.validate_against(map_a, map_b)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for line in sameas_triples(result, map_a, map_b) {
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
