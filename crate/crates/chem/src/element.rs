//! Periodic table data used for parsing, valence checks and the mass feature.

/// Element symbols indexed by atomic number minus one.
const SYMBOLS: [&str; 118] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In",
    "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb",
    "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl",
    "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk",
    "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh",
    "Fl", "Mc", "Lv", "Ts", "Og",
];

/// Standard atomic weights in unified atomic mass units (mass number of the
/// longest-lived isotope for elements without a stable one).
const MASSES: [f64; 118] = [
    1.008, 4.003, 6.941, 9.012, 10.812, 12.011, 14.007, 15.999, 18.998, 20.180, 22.990, 24.305,
    26.982, 28.086, 30.974, 32.065, 35.453, 39.948, 39.098, 40.078, 44.956, 47.867, 50.942,
    51.996, 54.938, 55.845, 58.933, 58.693, 63.546, 65.38, 69.723, 72.630, 74.922, 78.971,
    79.904, 83.798, 85.468, 87.62, 88.906, 91.224, 92.906, 95.95, 98.0, 101.07, 102.906, 106.42,
    107.868, 112.414, 114.818, 118.710, 121.760, 127.60, 126.904, 131.293, 132.905, 137.327,
    138.905, 140.116, 140.908, 144.242, 145.0, 150.36, 151.964, 157.25, 158.925, 162.500,
    164.930, 167.259, 168.934, 173.045, 174.967, 178.49, 180.948, 183.84, 186.207, 190.23,
    192.217, 195.084, 196.967, 200.592, 204.38, 207.2, 208.980, 209.0, 210.0, 222.0, 223.0,
    226.0, 227.0, 232.038, 231.036, 238.029, 237.0, 244.0, 243.0, 247.0, 247.0, 251.0, 252.0,
    257.0, 258.0, 259.0, 262.0, 267.0, 268.0, 269.0, 270.0, 269.0, 278.0, 281.0, 281.0, 285.0,
    286.0, 289.0, 289.0, 293.0, 294.0, 294.0,
];

pub const MAX_ATOMIC_NUMBER: u8 = 118;

pub fn symbol(atomic_number: u8) -> &'static str {
    SYMBOLS[usize::from(atomic_number) - 1]
}

pub fn atomic_number(symbol: &str) -> Option<u8> {
    SYMBOLS
        .iter()
        .position(|s| *s == symbol)
        .map(|i| (i + 1) as u8)
}

pub fn standard_mass(atomic_number: u8) -> f64 {
    MASSES[usize::from(atomic_number) - 1]
}

/// Valence electrons for the main-group elements the valence model knows
/// about. `None` means the element is never valence-checked.
fn valence_electrons(atomic_number: u8) -> Option<i32> {
    match atomic_number {
        1 => Some(1),
        5 => Some(3),
        6 | 14 => Some(4),
        7 | 15 | 33 => Some(5),
        8 | 16 | 34 | 52 => Some(6),
        9 | 17 | 35 | 53 => Some(7),
        _ => None,
    }
}

/// Allowed valences of an organic-subset atom written without brackets.
pub fn organic_valences(atomic_number: u8) -> Option<&'static [u32]> {
    match atomic_number {
        5 => Some(&[3]),
        6 => Some(&[4]),
        7 => Some(&[3, 5]),
        8 => Some(&[2]),
        15 => Some(&[3, 5]),
        16 => Some(&[2, 4, 6]),
        9 | 17 | 35 | 53 => Some(&[1]),
        _ => None,
    }
}

pub fn is_organic_subset(atomic_number: u8) -> bool {
    organic_valences(atomic_number).is_some()
}

/// Allowed valences for a (possibly charged) bracket atom, derived from the
/// isoelectronic neutral configuration. Period-3+ elements may expand by two
/// and four. Returns `None` for elements outside the valence model.
pub fn charged_valences(atomic_number: u8, charge: i32) -> Option<Vec<u32>> {
    let ve = valence_electrons(atomic_number)? - charge;
    if !(0..=8).contains(&ve) {
        return Some(Vec::new());
    }
    let base = if ve <= 4 { ve } else { 8 - ve };
    let mut out = vec![base as u32];
    let expandable = atomic_number > 10 && ve > 4;
    if expandable {
        let mut v = base + 2;
        while v <= ve {
            out.push(v as u32);
            v += 2;
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbols_round_trip() {
        for z in 1..=MAX_ATOMIC_NUMBER {
            assert_eq!(atomic_number(symbol(z)), Some(z));
        }
        assert_eq!(atomic_number("Xx"), None);
    }

    #[test]
    fn carbon_mass() {
        assert_eq!(standard_mass(6), 12.011);
    }

    #[test]
    fn charged_valence_table() {
        assert_eq!(charged_valences(7, 1), Some(vec![4]));
        assert_eq!(charged_valences(7, -1), Some(vec![2]));
        assert_eq!(charged_valences(8, -1), Some(vec![1]));
        assert_eq!(charged_valences(8, 1), Some(vec![3]));
        assert_eq!(charged_valences(6, -1), Some(vec![3]));
        assert_eq!(charged_valences(16, 0), Some(vec![2, 4, 6]));
        assert_eq!(charged_valences(5, -1), Some(vec![4]));
        assert_eq!(charged_valences(78, 0), None);
    }
}
