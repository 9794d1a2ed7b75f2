use crate::error::{Error, Result};

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub(crate) fn parse_opt(file: &str, line: usize, cell: &str) -> Result<Option<f64>> {
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse().map(Some).map_err(|_| Error::Parse {
        file: file.to_string(),
        line,
        msg: format!("bad number {cell:?}"),
    })
}
