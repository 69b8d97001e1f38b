use std::fmt::Write as _;

use super::{length, Corner, MeshError, MeshFrame};

/// Result of parsing one OBJ file.
#[derive(Debug, Clone)]
pub struct ObjParse {
    pub frame: MeshFrame,
    /// Number of lines whose directive is outside the v/vt/vn/f subset.
    pub ignored_directives: usize,
}

/// Parses the v/vt/vn/f subset of Wavefront OBJ.
///
/// Polygons with more than three corners are fan-triangulated around their
/// first corner. UVs outside `[0,1]` are wrapped by their fractional part and
/// normals are renormalized when their length is off by more than 1e-6.
pub fn parse_obj(bytes: &[u8]) -> Result<ObjParse, MeshError> {
    let text = std::str::from_utf8(bytes).map_err(|_| MeshError::Encoding)?;
    let mut frame = MeshFrame::default();
    let mut normals: Vec<[f32; 3]> = Vec::new();
    let mut ignored = 0usize;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let directive = tokens.next().unwrap_or_default();
        match directive {
            "v" => {
                let p = parse_floats::<3>(&mut tokens, line_no, "v")?;
                frame.vertices.push(p);
            }
            "vt" => {
                // an optional third (w) component is accepted and dropped
                let [u, v] = parse_floats::<2>(&mut tokens, line_no, "vt")?;
                frame.uvs.push([wrap_unit(u), wrap_unit(v)]);
            }
            "vn" => {
                let n = parse_floats::<3>(&mut tokens, line_no, "vn")?;
                let len = length(&n);
                if len == 0.0 {
                    return Err(MeshError::Parse {
                        line: line_no,
                        message: "zero-length normal".into(),
                    });
                }
                let n = if (len - 1.0).abs() > 1e-6 {
                    n.map(|c| (f64::from(c) / len) as f32)
                } else {
                    n
                };
                normals.push(n);
            }
            "f" => {
                let corners = tokens
                    .map(|tok| parse_corner(tok, line_no, &frame, normals.len()))
                    .collect::<Result<Vec<_>, _>>()?;
                if corners.len() < 3 {
                    return Err(MeshError::Parse {
                        line: line_no,
                        message: format!("face has {} corners, need at least 3", corners.len()),
                    });
                }
                for k in 1..corners.len() - 1 {
                    frame.triangles.push([corners[0], corners[k], corners[k + 1]]);
                }
            }
            _ => ignored += 1,
        }
    }

    if frame.triangles.is_empty() {
        return Err(MeshError::Empty);
    }
    if !normals.is_empty() {
        frame.normals = Some(normals);
    }
    if ignored > 0 {
        log::warn!("ignored {ignored} unsupported OBJ directive line(s)");
    }
    Ok(ObjParse {
        frame,
        ignored_directives: ignored,
    })
}

/// Writes a frame as OBJ text. Floats use the shortest representation that
/// reads back to the same `f32`, so `parse_obj(serialize_obj(m))` is exact.
pub fn serialize_obj(frame: &MeshFrame) -> Vec<u8> {
    let mut out = String::with_capacity(frame.vertices.len() * 32 + frame.triangles.len() * 24);
    for v in &frame.vertices {
        let _ = writeln!(out, "v {} {} {}", v[0], v[1], v[2]);
    }
    for uv in &frame.uvs {
        let _ = writeln!(out, "vt {} {}", uv[0], uv[1]);
    }
    for n in frame.normals.iter().flatten() {
        let _ = writeln!(out, "vn {} {} {}", n[0], n[1], n[2]);
    }
    for tri in &frame.triangles {
        out.push('f');
        for c in tri {
            out.push(' ');
            let _ = write!(out, "{}", c.vertex + 1);
            match (c.uv, c.normal) {
                (Some(t), Some(n)) => {
                    let _ = write!(out, "/{}/{}", t + 1, n + 1);
                }
                (Some(t), None) => {
                    let _ = write!(out, "/{}", t + 1);
                }
                (None, Some(n)) => {
                    let _ = write!(out, "//{}", n + 1);
                }
                (None, None) => {}
            }
        }
        out.push('\n');
    }
    out.into_bytes()
}

fn wrap_unit(x: f32) -> f32 {
    if (0.0..=1.0).contains(&x) {
        x
    } else {
        x - x.floor()
    }
}

fn parse_floats<'a, const N: usize>(
    tokens: &mut impl Iterator<Item = &'a str>,
    line: usize,
    directive: &str,
) -> Result<[f32; N], MeshError> {
    let mut out = [0f32; N];
    for slot in out.iter_mut() {
        let tok = tokens.next().ok_or_else(|| MeshError::Parse {
            line,
            message: format!("'{directive}' needs {N} components"),
        })?;
        let value: f32 = tok.parse().map_err(|_| MeshError::Parse {
            line,
            message: format!("malformed number '{tok}'"),
        })?;
        if !value.is_finite() {
            return Err(MeshError::Parse {
                line,
                message: format!("non-finite number '{tok}'"),
            });
        }
        *slot = value;
    }
    Ok(out)
}

fn parse_corner(
    tok: &str,
    line: usize,
    frame: &MeshFrame,
    normal_count: usize,
) -> Result<Corner, MeshError> {
    let mut parts = tok.split('/');
    let v = parts.next().unwrap_or_default();
    let vertex = resolve_index(v, line, "vertex", frame.vertices.len())?.ok_or_else(|| {
        MeshError::Parse {
            line,
            message: format!("face corner '{tok}' has no vertex index"),
        }
    })?;
    let uv = match parts.next() {
        Some(t) => resolve_index(t, line, "uv", frame.uvs.len())?,
        None => None,
    };
    let normal = match parts.next() {
        Some(n) => resolve_index(n, line, "normal", normal_count)?,
        None => None,
    };
    if parts.next().is_some() {
        return Err(MeshError::Parse {
            line,
            message: format!("malformed face corner '{tok}'"),
        });
    }
    Ok(Corner { vertex, uv, normal })
}

/// Resolves a 1-based (or negative, relative) OBJ index. Empty means absent.
fn resolve_index(
    tok: &str,
    line: usize,
    kind: &'static str,
    count: usize,
) -> Result<Option<usize>, MeshError> {
    if tok.is_empty() {
        return Ok(None);
    }
    let index: i64 = tok.parse().map_err(|_| MeshError::Parse {
        line,
        message: format!("malformed index '{tok}'"),
    })?;
    let resolved = match index {
        i if i > 0 => i - 1,
        i if i < 0 => count as i64 + i,
        _ => -1,
    };
    if resolved < 0 || resolved as usize >= count {
        return Err(MeshError::IndexOutOfRange {
            line,
            kind,
            index,
            count,
        });
    }
    Ok(Some(resolved as usize))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRI: &str = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nf 1/1 2/2 3/3";

    #[test]
    fn minimal_triangle() {
        let parsed = parse_obj(TRI.as_bytes()).unwrap();
        let m = parsed.frame;
        assert_eq!(m.vertices.len(), 3);
        assert_eq!(m.uvs.len(), 3);
        assert_eq!(m.triangles.len(), 1);
        assert!(m.normals.is_none());
        assert_eq!(m.triangles[0][2], Corner::new(2, Some(2), None));
        assert_eq!(parsed.ignored_directives, 0);
    }

    #[test]
    fn quad_is_fan_triangulated() {
        let src = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\nf 1/1 2/2 3/3 4/4\n";
        let m = parse_obj(src.as_bytes()).unwrap().frame;
        let verts: Vec<[usize; 3]> = m
            .triangles
            .iter()
            .map(|t| [t[0].vertex, t[1].vertex, t[2].vertex])
            .collect();
        assert_eq!(verts, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn corner_syntaxes() {
        let src = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 2\nf 1//1 2//1 3//1\nf -3 -2 -1\n";
        let m = parse_obj(src.as_bytes()).unwrap().frame;
        assert_eq!(m.triangles[0][1], Corner::new(1, None, Some(0)));
        assert_eq!(m.triangles[1][0], Corner::new(0, None, None));
        assert_eq!(m.normals.unwrap()[0], [0.0, 0.0, 1.0]);
    }

    #[test]
    fn unknown_directives_are_counted() {
        let src = format!("mtllib head.mtl\no head\ns 1\n{TRI}\nusemtl skin\n");
        let parsed = parse_obj(src.as_bytes()).unwrap();
        assert_eq!(parsed.ignored_directives, 4);
    }

    #[test]
    fn malformed_number_reports_line() {
        let err = parse_obj(b"v 0 0 0\nv 1 x 0\n").unwrap_err();
        assert!(matches!(err, MeshError::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn out_of_range_index() {
        let err = parse_obj(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n").unwrap_err();
        assert!(
            matches!(err, MeshError::IndexOutOfRange { line: 4, index: 4, .. }),
            "{err}"
        );
        let err = parse_obj(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n").unwrap_err();
        assert!(matches!(err, MeshError::IndexOutOfRange { index: 0, .. }));
    }

    #[test]
    fn no_faces_is_empty_error() {
        assert!(matches!(parse_obj(b"v 0 0 0\n"), Err(MeshError::Empty)));
        assert!(matches!(parse_obj(b""), Err(MeshError::Empty)));
    }

    #[test]
    fn uvs_wrap_into_unit_square() {
        let src = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 1.25 -0.25\nf 1/1 2/1 3/1\n";
        let m = parse_obj(src.as_bytes()).unwrap().frame;
        assert_eq!(m.uvs[0], [0.25, 0.75]);
        m.validate().unwrap();
    }

    #[test]
    fn serialize_without_uvs_uses_vertex_only_corners() {
        let src = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n";
        let m = parse_obj(src.as_bytes()).unwrap().frame;
        let text = String::from_utf8(serialize_obj(&m)).unwrap();
        assert!(!text.contains("vt"));
        assert!(text.contains("f 1 2 3\n"));
        assert_eq!(parse_obj(text.as_bytes()).unwrap().frame, m);
    }

    #[test]
    fn minimal_triangle_round_trips() {
        let m = parse_obj(TRI.as_bytes()).unwrap().frame;
        let again = parse_obj(&serialize_obj(&m)).unwrap().frame;
        assert_eq!(again, m);
    }
}
