from .base import (
    DEFAULT_BUDGET,
    ChainData,
    Contract,
    ContractInstance,
    ContractState,
    MoveContext,
    MoveOutcome,
    code_by_name,
    contract_for_code,
    init_contract,
    register_contract,
)
from .samples import Counter, Escrow, QuickSort, RockPaperScissors

__all__ = [
    "DEFAULT_BUDGET", "ChainData", "Contract", "ContractInstance", "ContractState",
    "MoveContext", "MoveOutcome", "code_by_name", "contract_for_code", "init_contract",
    "register_contract", "Counter", "Escrow", "QuickSort", "RockPaperScissors",
]
