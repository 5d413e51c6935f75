from typing import Dict, List

from pydantic import BaseModel, ConfigDict, Field, model_validator

NO_BOND = "NO_BOND"

# bond-order units contributed by each bond category
BOND_ORDERS: Dict[str, int] = {NO_BOND: 0, "SINGLE": 1, "DOUBLE": 2, "TRIPLE": 3}
BOND_SYMBOLS: Dict[str, str] = {"SINGLE": "", "DOUBLE": "=", "TRIPLE": "#"}


class Vocabulary(BaseModel):
    """Node and edge category tables, mask ids and valences."""

    model_config = ConfigDict(frozen=True)

    atom_types: List[str] = Field(
        default_factory=lambda: ["C", "N", "O", "F"],
        description="Ordered atom symbols; index = node category id",
    )
    bond_types: List[str] = Field(
        default_factory=lambda: [NO_BOND, "SINGLE", "DOUBLE", "TRIPLE"],
        description="Ordered bond categories; index 0 must be NO_BOND",
    )
    valence: Dict[str, int] = Field(
        default_factory=lambda: {"C": 4, "N": 3, "O": 2, "F": 1},
        description="Maximum valence in bond-order units per atom symbol",
    )

    @model_validator(mode="after")
    def _check_tables(self) -> "Vocabulary":
        if not self.atom_types:
            raise ValueError("atom_types must not be empty")
        if not self.bond_types or self.bond_types[0] != NO_BOND:
            raise ValueError("bond_types[0] must be NO_BOND")
        unknown = [b for b in self.bond_types if b not in BOND_ORDERS]
        if unknown:
            raise ValueError(f"unsupported bond types {unknown}")
        missing = [a for a in self.atom_types if a not in self.valence]
        if missing:
            raise ValueError(f"valence missing for atom types {missing}")
        if len(set(self.atom_types)) != len(self.atom_types):
            raise ValueError("duplicate atom types")
        return self

    @property
    def num_atom_types(self) -> int:
        """A_real: number of real (non-mask) node categories."""
        return len(self.atom_types)

    @property
    def num_bond_types(self) -> int:
        """B_real: number of real edge categories, NO_BOND included."""
        return len(self.bond_types)

    @property
    def node_mask_id(self) -> int:
        return len(self.atom_types)

    @property
    def edge_mask_id(self) -> int:
        return len(self.bond_types)

    def atom_index(self, symbol: str) -> int:
        return self.atom_types.index(symbol)

    def bond_index(self, name: str) -> int:
        return self.bond_types.index(name)

    def bond_order(self, edge_id: int) -> int:
        return BOND_ORDERS[self.bond_types[edge_id]]

    def bond_order_table(self) -> List[int]:
        return [BOND_ORDERS[b] for b in self.bond_types]

    def valence_table(self) -> List[int]:
        return [self.valence[a] for a in self.atom_types]


def default_vocabulary() -> Vocabulary:
    """QM9-style vocabulary: C, N, O, F with kekulized bonds."""
    return Vocabulary()
