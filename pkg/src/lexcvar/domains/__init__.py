from .betting import BettingParams, build_betting_game
from .desk import build_desk_instance
from .dst import DstConfig, build_deep_sea_treasure, load_layout, parse_layout
from .inventory import InventoryParams, build_inventory_control, stage_profit

__all__ = [
    "BettingParams",
    "build_betting_game",
    "build_desk_instance",
    "DstConfig",
    "build_deep_sea_treasure",
    "load_layout",
    "parse_layout",
    "InventoryParams",
    "build_inventory_control",
    "stage_profit",
]
