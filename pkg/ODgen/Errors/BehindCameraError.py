class BehindCameraError(Exception):
    def __init__(self, depth):
        self.depth = depth

    def __str__(self):
        return 'Error while projecting to the image plane:\n\npoint lies behind the camera (depth {:.3g} m)'.format(self.depth)
