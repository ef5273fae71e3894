"""Sample contracts used by scenarios and tests."""

from __future__ import annotations

from ..crypto import PartyId
from ..errors import InvalidMove
from ..kernels import quicksort_steps
from .base import Contract, MoveContext, register_contract


def _uid(user: PartyId) -> str:
    return user.ident.hex()


@register_contract
class Counter(Contract):
    """``inc``, ``add k`` and ``spin n`` (burns n steps, for budget tests)."""

    code = b"posesim.contract.counter/v1"
    name = "counter"

    def initial_app(self):
        return {"public": {"value": 0}, "private": {}}

    def apply_move(self, ctx: MoveContext, app, user, move):
        op = move[0]
        ctx.step()
        if op == "inc":
            app["public"]["value"] += 1
        elif op == "add":
            app["public"]["value"] += int(move[1])
        elif op == "spin":
            for _ in range(int(move[1])):
                ctx.step()
            app["public"]["value"] += 1
        elif op == "get":
            pass
        else:
            raise InvalidMove(f"counter: unknown op {op!r}")
        return app["public"]["value"]


BEATS = {"rock": "scissors", "paper": "rock", "scissors": "paper"}


@register_contract
class RockPaperScissors(Contract):
    """Two players commit private moves; the pot goes to the winner.

    Moves: ``("play", choice, salt)``.  A player needs ``stake`` credit from
    deposits.  Moves stay in the private partition until both are in.
    """

    code = b"posesim.contract.rps/v1"
    name = "rps"
    stake = 0

    def initial_app(self):
        return {
            "public": {"status": "AwaitingBothMoves", "round": 0, "players": [],
                       "last": None, "credit": {}},
            "private": {"moves": {}},
        }

    def on_deposit(self, app, user, coins):
        credit = app["public"]["credit"]
        credit[_uid(user)] = credit.get(_uid(user), 0) + coins

    def apply_move(self, ctx, app, user, move):
        pub, priv = app["public"], app["private"]
        ctx.step()
        if move[0] == "withdraw":
            have = pub["credit"].get(_uid(user), 0)
            if have <= 0:
                raise InvalidMove("nothing to withdraw")
            ctx.withdraw(have, user)
            pub["credit"][_uid(user)] = 0
            return have
        if move[0] != "play" or move[1] not in BEATS:
            raise InvalidMove(f"rps: bad move {move[0]!r}")
        uid = _uid(user)
        if uid in priv["moves"]:
            raise InvalidMove("already moved this round")
        if len(pub["players"]) == 2 and uid not in pub["players"]:
            raise InvalidMove("round is full")
        stake = int(move[3]) if len(move) > 3 else self.stake
        if pub["credit"].get(uid, 0) < stake:
            raise InvalidMove("stake not covered")
        pub["credit"][uid] = pub["credit"].get(uid, 0) - stake
        priv["moves"][uid] = [move[1], move[2], stake, user]
        if uid not in pub["players"]:
            pub["players"].append(uid)
        if len(priv["moves"]) < 2:
            return "waiting"
        (ua, (ca, _, sa, pa)), (ub, (cb, _, sb, pb)) = sorted(priv["moves"].items())
        pot = sa + sb
        if ca == cb:
            winner = None
            pub["credit"][ua] += sa
            pub["credit"][ub] += sb
        else:
            winner, wparty = (ua, pa) if BEATS[ca] == cb else (ub, pb)
            if pot:
                ctx.withdraw(pot, wparty)
        pub["last"] = {"round": pub["round"], "moves": {ua: ca, ub: cb}, "winner": winner}
        pub["round"] += 1
        pub["players"] = []
        pub["status"] = "AwaitingBothMoves"
        priv["moves"] = {}
        return winner or "draw"


@register_contract
class Escrow(Contract):
    """Deposit-gated transfers.

    ``("pay", to_ident_hex, coins)`` moves credit between users;
    ``("hold", seller_hex, coins)`` locks credit in an escrow slot;
    ``("release", slot)`` by the buyer credits the seller,
    ``("refund", slot)`` by the seller credits the buyer back;
    ``("withdraw", coins)`` turns credit into an on-chain withdrawal.
    """

    code = b"posesim.contract.escrow/v1"
    name = "escrow"

    def initial_app(self):
        return {"public": {"credit": {}, "slots": []}, "private": {}}

    def on_deposit(self, app, user, coins):
        credit = app["public"]["credit"]
        credit[_uid(user)] = credit.get(_uid(user), 0) + coins

    def _take(self, pub, uid, coins):
        if coins <= 0 or pub["credit"].get(uid, 0) < coins:
            raise InvalidMove("insufficient credit")
        pub["credit"][uid] -= coins

    def apply_move(self, ctx, app, user, move):
        pub = app["public"]
        uid = _uid(user)
        op = move[0]
        ctx.step()
        if op == "pay":
            coins = int(move[2])
            self._take(pub, uid, coins)
            pub["credit"][move[1]] = pub["credit"].get(move[1], 0) + coins
        elif op == "hold":
            coins = int(move[2])
            self._take(pub, uid, coins)
            pub["slots"].append([uid, move[1], coins, "held"])
            return len(pub["slots"]) - 1
        elif op in ("release", "refund"):
            slot = int(move[1])
            if not 0 <= slot < len(pub["slots"]):
                raise InvalidMove("no such slot")
            buyer, seller, coins, status = pub["slots"][slot]
            if status != "held":
                raise InvalidMove("slot closed")
            if op == "release" and uid != buyer or op == "refund" and uid != seller:
                raise InvalidMove("not allowed")
            to = seller if op == "release" else buyer
            pub["credit"][to] = pub["credit"].get(to, 0) + coins
            pub["slots"][slot][3] = op + "d"
        elif op == "withdraw":
            coins = int(move[1])
            self._take(pub, uid, coins)
            ctx.withdraw(coins, user)
        else:
            raise InvalidMove(f"escrow: unknown op {op!r}")
        return pub["credit"].get(uid, 0)


SORT_SIZE = 2048


@register_contract
class QuickSort(Contract):
    """Sorts a hard-coded array of 2048 pseudo-random integers; steps = comparisons."""

    code = b"posesim.contract.quicksort2048/v1"
    name = "quicksort"

    def initial_app(self):
        return {"public": {"runs": 0, "checksum": 0, "comparisons": 0}, "private": {}}

    def apply_move(self, ctx, app, user, move):
        seed = int.from_bytes(ctx.rand_bytes()[:8], "big")
        data = [(seed * 6364136223846793005 + i * 1442695040888963407) % (1 << 31)
                for i in range(SORT_SIZE)]
        out, comparisons = quicksort_steps(data, seed)
        ctx.step(comparisons)
        pub = app["public"]
        pub["runs"] += 1
        pub["comparisons"] = comparisons
        pub["checksum"] = sum((i + 1) * v for i, v in enumerate(out)) % (1 << 61)
        return comparisons
