class BackgroundTooSmallError(Exception):
    def __init__(self, size, target):
        self.size = size
        self.target = target

    def __str__(self):
        return 'Error while augmenting a background:\n\nbackground of size {}x{} cannot hold a {}x{} crop'.format(*self.size, *self.target)
