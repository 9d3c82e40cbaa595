use pyo3::prelude::*;

#[pymodule]
fn recheck_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
