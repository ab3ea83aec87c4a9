from setuptools import setup, find_packages

setup(name='ODgen',
      version='1.0.0',
      description='ODgen renders labelled synthetic object detection datasets and studies how detectors '
                  'trained on them transfer to real images',
      license='MIT',
      packages=find_packages(exclude=['*Testing*']),
      install_requires=['numpy', 'scipy', 'pandas', 'Pillow>=9.1', 'lark>=1.1', 'sortedcontainers'],
      tests_require=['pytest', 'hypothesis'],
      entry_points={'console_scripts': ['odgen=ODgen.CLI:main']},
      test_suite="Testing",
      zip_safe=False)
