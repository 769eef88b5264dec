/// CRC-8 with polynomial 0x07, zero init, no reflection, no final xor.
pub fn crc8(data: &[u8]) -> u8 {
    static TABLE: std::sync::OnceLock<[u8; 256]> = std::sync::OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = [0u8; 256];
        for (i, slot) in t.iter_mut().enumerate() {
            let mut c = i as u8;
            for _ in 0..8 {
                c = if c & 0x80 != 0 { (c << 1) ^ 0x07 } else { c << 1 };
            }
            *slot = c;
        }
        t
    });
    data.iter().fold(0u8, |c, &b| table[(c ^ b) as usize])
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Polynomial long division over GF(2), one bit at a time.
    fn long_division(data: &[u8]) -> u8 {
        let mut bits: Vec<u8> = data
            .iter()
            .flat_map(|b| (0..8).rev().map(move |k| (b >> k) & 1))
            .collect();
        bits.extend([0u8; 8]);
        let poly = [1u8, 0, 0, 0, 0, 0, 1, 1, 1];
        for i in 0..bits.len() - 8 {
            if bits[i] == 1 {
                for (j, p) in poly.iter().enumerate() {
                    bits[i + j] ^= p;
                }
            }
        }
        bits[bits.len() - 8..].iter().fold(0, |acc, b| (acc << 1) | b)
    }

    #[test]
    fn zero_payload() {
        assert_eq!(crc8(&[0]), 0);
    }

    #[test]
    fn check_value() {
        // standard CRC-8 check value over ASCII "123456789"
        assert_eq!(crc8(b"123456789"), 0xF4);
    }

    #[test]
    fn matches_long_division() {
        assert_eq!(crc8(&[0xB6]), long_division(&[0xB6]));
        for b in 0..=255u8 {
            assert_eq!(crc8(&[b]), long_division(&[b]));
            assert_eq!(crc8(&[b, 0x5C, b ^ 0xFF]), long_division(&[b, 0x5C, b ^ 0xFF]));
        }
    }
}
