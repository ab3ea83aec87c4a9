class NumericalOverflowError(Exception):
    def __init__(self, step, loss):
        self.step = step
        self.loss = loss

    def __str__(self):
        return 'Error while training the network:\n\nloss became {} at step {}'.format(self.loss, self.step)
