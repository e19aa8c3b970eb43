use std::collections::BTreeMap;

use super::split::SplitIndices;
use crate::error::{Error, Result};
use crate::nn::Matrix;

/// One client's preprocessed rows with local split indices.
#[derive(Debug, Clone)]
pub struct ClientDataset {
    pub client_id: String,
    pub x: Matrix,
    pub t: Vec<u8>,
    pub y: Vec<u8>,
    /// Row index in the full table for each local row.
    pub global_rows: Vec<usize>,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl ClientDataset {
    pub fn n_rows(&self) -> usize {
        self.t.len()
    }

    pub fn n_train(&self) -> usize {
        self.train.len()
    }

    pub fn input_dim(&self) -> usize {
        self.x.cols()
    }

    /// `(X, T, Y)` for the given local rows.
    pub fn subset(&self, rows: &[usize]) -> (Matrix, Vec<u8>, Vec<u8>) {
        (
            self.x.select_rows(rows),
            rows.iter().map(|&i| self.t[i]).collect(),
            rows.iter().map(|&i| self.y[i]).collect(),
        )
    }

    /// Concatenation of several clients in the given order, as one dataset.
    pub fn pool(clients: &[ClientDataset]) -> Result<ClientDataset> {
        let first = clients
            .first()
            .ok_or_else(|| Error::Empty("no clients to pool".into()))?;
        if clients.len() == 1 {
            return Ok(first.clone());
        }
        let d = first.input_dim();
        let mut data = Vec::new();
        let mut pooled = ClientDataset {
            client_id: "pooled".into(),
            x: Matrix::zeros(0, d),
            t: Vec::new(),
            y: Vec::new(),
            global_rows: Vec::new(),
            train: Vec::new(),
            valid: Vec::new(),
            test: Vec::new(),
        };
        for c in clients {
            if c.input_dim() != d {
                return Err(Error::dim("ClientDataset::pool", d, c.input_dim()));
            }
            let offset = pooled.t.len();
            data.extend_from_slice(c.x.data());
            pooled.t.extend_from_slice(&c.t);
            pooled.y.extend_from_slice(&c.y);
            pooled.global_rows.extend_from_slice(&c.global_rows);
            pooled.train.extend(c.train.iter().map(|i| i + offset));
            pooled.valid.extend(c.valid.iter().map(|i| i + offset));
            pooled.test.extend(c.test.iter().map(|i| i + offset));
        }
        pooled.x = Matrix::from_vec(pooled.t.len(), d, data)?;
        Ok(pooled)
    }
}

/// Groups rows by client label (lexicographic order), keeping each row's
/// global split membership.
pub fn partition_clients(
    x: &Matrix,
    t: &[u8],
    y: &[u8],
    client_ids: &[String],
    split: &SplitIndices,
) -> Result<Vec<ClientDataset>> {
    let n = x.rows();
    if t.len() != n || y.len() != n || client_ids.len() != n {
        return Err(Error::dim("partition_clients", n, client_ids.len()));
    }
    let mut role = vec![u8::MAX; n];
    for (r, part) in [&split.train, &split.valid, &split.test].into_iter().enumerate() {
        for &i in part {
            role[i] = r as u8;
        }
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, id) in client_ids.iter().enumerate() {
        groups.entry(id.as_str()).or_default().push(i);
    }
    if groups.is_empty() {
        return Err(Error::Empty("no clients".into()));
    }
    let mut out = Vec::with_capacity(groups.len());
    for (id, rows) in groups {
        let (cx, ct, cy) = (
            x.select_rows(&rows),
            rows.iter().map(|&i| t[i]).collect(),
            rows.iter().map(|&i| y[i]).collect(),
        );
        let mut client = ClientDataset {
            client_id: id.to_string(),
            x: cx,
            t: ct,
            y: cy,
            global_rows: rows.clone(),
            train: Vec::new(),
            valid: Vec::new(),
            test: Vec::new(),
        };
        for (local, &g) in rows.iter().enumerate() {
            match role[g] {
                0 => client.train.push(local),
                1 => client.valid.push(local),
                2 => client.test.push(local),
                _ => {}
            }
        }
        if client.train.is_empty() {
            log::warn!("client `{id}` has no training rows and is excluded from training");
        }
        out.push(client);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(ids: &[&str]) -> (Matrix, Vec<u8>, Vec<u8>, Vec<String>, SplitIndices) {
        let n = ids.len();
        let x = Matrix::from_vec(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
        let split = SplitIndices {
            train: (0..n).filter(|i| i % 3 != 2).collect(),
            valid: vec![],
            test: (0..n).filter(|i| i % 3 == 2).collect(),
        };
        (x, vec![0; n], vec![1; n], ids.iter().map(|s| s.to_string()).collect(), split)
    }

    #[test]
    fn sizes_and_order() {
        let ids: Vec<&str> = (0..15).map(|i| if i % 3 == 0 { "b" } else { "a" }).collect();
        let (x, t, y, ids, split) = fixture(&ids);
        let clients = partition_clients(&x, &t, &y, &ids, &split).unwrap();
        assert_eq!(clients.len(), 2);
        assert_eq!(clients[0].client_id, "a");
        assert_eq!(clients[0].n_rows(), 10);
        assert_eq!(clients[1].n_rows(), 5);
        assert_eq!(clients.iter().map(ClientDataset::n_rows).sum::<usize>(), 15);
    }

    #[test]
    fn single_client_is_identity() {
        let ids = vec!["only"; 9];
        let (x, t, y, ids, split) = fixture(&ids);
        let clients = partition_clients(&x, &t, &y, &ids, &split).unwrap();
        assert_eq!(clients.len(), 1);
        assert_eq!(clients[0].x, x);
        assert_eq!(clients[0].train, split.train);
        assert_eq!(clients[0].test, split.test);
    }

    #[test]
    fn rows_are_disjoint_and_split_preserved() {
        let ids = ["c", "a", "b", "a", "c", "c", "b", "a", "a", "b", "c", "a"];
        let (x, t, y, ids, split) = fixture(&ids);
        let clients = partition_clients(&x, &t, &y, &ids, &split).unwrap();
        let mut seen = vec![0; 12];
        for c in &clients {
            for (local, &g) in c.global_rows.iter().enumerate() {
                seen[g] += 1;
                assert_eq!(c.x.get(local, 0), g as f64);
                assert_eq!(ids[g], c.client_id);
                assert_eq!(c.test.contains(&local), split.test.contains(&g));
            }
        }
        assert!(seen.iter().all(|&s| s == 1));
        let pooled = ClientDataset::pool(&clients).unwrap();
        assert_eq!(pooled.n_rows(), 12);
        assert_eq!(pooled.train.len(), split.train.len());
    }
}
