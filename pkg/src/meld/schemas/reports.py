from typing import Dict, List

from pydantic import BaseModel, Field


class MetricsReport(BaseModel):
    """Generation quality of one sample set."""
    generated: int = Field(description="Number of generated graphs")
    valid: int = Field(description="Graphs passing the valence check")
    unique: int = Field(description="Isomorphism classes among valid graphs")
    novel: int = Field(description="Valid graphs whose class is absent from training")
    validity_pct: float = Field(ge=0, le=100)
    uniqueness_pct: float = Field(ge=0, le=100, description="Unique over valid")
    novelty_pct: float = Field(ge=0, le=100, description="Novel over valid")
    empty_valid_set: bool = Field(default=False, description="No valid graph; uniqueness/novelty set to 0")
    connected_pct: float = Field(default=0.0, ge=0, le=100, description="Valid graphs with one component")
    mmd: Dict[str, float] = Field(default_factory=dict, description="MMD^2 per graph statistic")
    clash_table: Dict[str, float] = Field(default_factory=dict, description="Mean unique states per t")
    notes: List[str] = Field(default_factory=list)

    def to_text(self) -> str:
        """Aligned two-column rendering."""
        rows = [
            ("generated", str(self.generated)),
            ("valid", str(self.valid)),
            ("unique", str(self.unique)),
            ("novel", str(self.novel)),
            ("validity %", f"{self.validity_pct:.2f}"),
            ("uniqueness %", f"{self.uniqueness_pct:.2f}"),
            ("novelty %", f"{self.novelty_pct:.2f}"),
            ("connected %", f"{self.connected_pct:.2f}"),
        ]
        if self.empty_valid_set:
            rows.append(("flag", "empty valid set"))
        rows += [(f"mmd {name}", f"{value:.6g}") for name, value in self.mmd.items()]
        rows += [(f"clash t={t}", f"{value:.4g}") for t, value in self.clash_table.items()]
        rows += [("note", note) for note in self.notes]
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name.ljust(width)}  {value}" for name, value in rows) + "\n"
