"""RIS-assisted mmWave coverage and EMF-exposure analysis."""
