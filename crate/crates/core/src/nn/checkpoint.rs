//! Model checkpoints.
//!
//! Layout (integers `u64` little-endian, floats `f64` little-endian):
//!
//! ```text
//! "TVFLCK1"
//! K, hidden activation code (0 = relu, 1 = identity)
//! n_local, local widths…, n_central, central widths…
//! central model, then local models 1…K; each model is its layers in
//! order, each layer its weights (input-major, `in × out`) then its bias
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Activation, Mlp, NetSpec, SplitNet};
use crate::error::{Error, Result};

const MAGIC: &[u8; 7] = b"TVFLCK1";

pub fn write_checkpoint<W: Write>(net: &SplitNet, w: &mut W) -> Result<()> {
    w.write_all(MAGIC)?;
    let mut put = |v: u64| w.write_all(&v.to_le_bytes());
    put(net.num_su() as u64)?;
    put(net.spec.hidden.code())?;
    put(net.spec.local_arch.len() as u64)?;
    for &x in &net.spec.local_arch {
        put(x as u64)?;
    }
    put(net.spec.central_arch.len() as u64)?;
    for &x in &net.spec.central_arch {
        put(x as u64)?;
    }
    for m in std::iter::once(&net.central).chain(&net.locals) {
        for v in m.flatten() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<SplitNet> {
    let mut magic = [0u8; 7];
    r.read_exact(&mut magic)
        .map_err(|_| Error::MalformedHeader("checkpoint shorter than magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::MalformedHeader("bad checkpoint magic".into()));
    }
    let mut get = |what: &str| -> Result<u64> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)
            .map_err(|_| Error::MalformedHeader(format!("missing `{what}`")))?;
        Ok(u64::from_le_bytes(b))
    };
    let k = get("K")? as usize;
    let hidden = Activation::from_code(get("activation")?)
        .ok_or_else(|| Error::MalformedHeader("unknown activation code".into()))?;
    let mut widths = |what: &str| -> Result<Vec<usize>> {
        let n = get(what)?;
        if n > 64 {
            return Err(Error::MalformedHeader(format!("{what}: {n} layers")));
        }
        (0..n).map(|_| get(what).map(|v| v as usize)).collect()
    };
    let local_arch = widths("local widths")?;
    let central_arch = widths("central widths")?;
    let spec = NetSpec {
        local_arch,
        central_arch,
        num_su: k,
        hidden,
    };
    spec.validate()?;
    let mut central = Mlp::zeros(&spec.central_arch, hidden);
    let mut locals = vec![Mlp::zeros(&spec.local_arch, hidden); k];
    for m in std::iter::once(&mut central).chain(locals.iter_mut()) {
        for p in m.params_mut() {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)
                .map_err(|_| Error::TruncatedPayload("checkpoint parameters".into()))?;
            *p = f64::from_le_bytes(b);
        }
    }
    Ok(SplitNet {
        spec,
        central,
        locals,
    })
}

pub fn save_checkpoint(net: &SplitNet, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(net, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<SplitNet> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let net = SplitNet::new(NetSpec::network_ii(2), 7).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&net, &mut buf).unwrap();
        assert_eq!(read_checkpoint(&mut buf.as_slice()).unwrap(), net);
        let r = read_checkpoint(&mut &buf[..buf.len() - 3]);
        assert!(matches!(r, Err(Error::TruncatedPayload(_))));
        assert!(read_checkpoint(&mut [].as_slice()).is_err());
    }
}
