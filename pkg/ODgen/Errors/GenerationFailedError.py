class GenerationFailedError(Exception):
    def __init__(self, sample_index, attempts, reason=None):
        self.sample_index = sample_index
        self.attempts = attempts
        self.reason = reason

    def __str__(self):
        text = 'Error while generating sample {}:\n\nno valid placement after {} attempts'.format(self.sample_index,
                                                                                                 self.attempts)
        if self.reason is not None:
            text += ' (last failure: {})'.format(self.reason)
        return text
