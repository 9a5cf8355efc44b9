class Account:
    """A bank account."""

    rate = 0.01

    def __init__(self, owner, balance=0):
        self.owner = owner
        self.balance = balance

    def deposit(self, amount):
        if amount <= 0:
            raise ValueError("amount must be positive")
        self.balance += amount
        return self.balance

    def interest(self):
        return self.balance * self.rate if self.balance > 0 else 0
